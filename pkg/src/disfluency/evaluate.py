"""Token-level scoring of disfluency predictions and correction output.

Metrics are micro averaged over the DISFLUENT class: true/false positives
and false negatives are pooled over every token of every sentence before
precision/recall/F1 are formed, and every report says so in its header.
Zero-denominator cases report 0 and set the ``degenerate`` flag rather than
being skipped.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import load_metadata, load_params
from .corpus import Label, ParallelPair
from .errors import AlignmentError, VocabMismatchError
from .model import AdversarialTagger
from .textnorm import Vocabulary, encode, vocab_hash


@dataclass
class MetricReport:
    tp: int
    fp: int
    fn: int
    precision: float  # percent
    recall: float
    f1: float
    exact_match_rate: float
    degenerate: bool
    n_sentences: int
    n_truncated: int = 0
    averaging: str = "micro"


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1, degenerate


def score(
    gold: Sequence[Sequence[Label]],
    pred: Sequence[Sequence[Label]],
    tokens: Sequence[Sequence[str]] | None = None,
) -> MetricReport:
    """Micro P/R/F1 of the DISFLUENT class over aligned label sequences.

    When ``tokens`` is given, the exact-match rate compares corrected
    sentences (FLUENT-token filtrate); otherwise it compares label sequences.
    """
    if len(gold) != len(pred):
        raise AlignmentError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = fp = fn = 0
    exact = 0
    for i, (g_seq, p_seq) in enumerate(zip(gold, pred)):
        if len(g_seq) != len(p_seq):
            raise AlignmentError(
                f"sentence {i}: {len(g_seq)} gold labels vs {len(p_seq)} predicted"
            )
        for g, p in zip(g_seq, p_seq):
            if p is Label.DISFLUENT:
                if g is Label.DISFLUENT:
                    tp += 1
                else:
                    fp += 1
            elif g is Label.DISFLUENT:
                fn += 1
        if tokens is not None:
            toks = tokens[i]
            if apply_correction(toks, g_seq) == apply_correction(toks, p_seq):
                exact += 1
        elif tuple(g_seq) == tuple(p_seq):
            exact += 1
    p, r, f1, degenerate = _prf(tp, fp, fn)
    rate = 100.0 * exact / len(gold) if gold else 0.0
    return MetricReport(tp, fp, fn, p, r, f1, rate, degenerate, len(gold))


def apply_correction(tokens: Sequence[str], labels: Sequence[Label]) -> list[str]:
    """Keep the FLUENT tokens, in order."""
    if len(tokens) != len(labels):
        raise AlignmentError(f"{len(tokens)} tokens vs {len(labels)} labels")
    return [t for t, l in zip(tokens, labels) if l is Label.FLUENT]


# ---------------------------------------------------------------------------
# model-side prediction


def predict(
    model: AdversarialTagger,
    sentences: Sequence[Sequence[str]],
    vocab: Vocabulary,
    batch_size: int = 64,
) -> list[list[Label]]:
    """Per-token argmax labels; ties fall to FLUENT, padding is dropped."""
    max_len = model.enc_cfg.max_len
    out: list[list[Label]] = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start : start + batch_size]
        ids = np.zeros((len(chunk), max_len), dtype=np.int32)
        mask = np.zeros((len(chunk), max_len), dtype=np.float32)
        for i, sent in enumerate(chunk):
            ids[i], mask[i] = encode(sent, vocab, max_len)
        logits = model.discriminate(model.encode(ids, mask)).token_logits.data
        disfluent = logits[:, :, 1] > logits[:, :, 0]
        for i, sent in enumerate(chunk):
            n = min(len(sent), max_len)
            out.append(
                [Label.DISFLUENT if disfluent[i, j] else Label.FLUENT for j in range(n)]
            )
    return out


def evaluate_model(
    model: AdversarialTagger,
    pairs: Sequence[ParallelPair],
    vocab: Vocabulary,
    batch_size: int = 64,
) -> MetricReport:
    """Score a model against gold pairs, truncating gold to the model length."""
    max_len = model.enc_cfg.max_len
    sentences = [p.disfluent.tokens for p in pairs]
    gold = [list(p.disfluent.labels[:max_len]) for p in pairs]
    tokens = [list(p.disfluent.tokens[:max_len]) for p in pairs]
    pred = predict(model, sentences, vocab, batch_size)
    report = score(gold, pred, tokens)
    report.n_truncated = sum(1 for p in pairs if len(p.disfluent.tokens) > max_len)
    return report


def load_tagger(
    ckpt_path: str | Path, vocab: Vocabulary | None = None
) -> tuple[AdversarialTagger, dict]:
    """Rebuild a tagger from a checkpoint; verifies the vocabulary hash."""
    meta = load_metadata(ckpt_path)
    if vocab is not None and meta.get("vocab_hash") != vocab_hash(vocab):
        raise VocabMismatchError(
            f"checkpoint {ckpt_path} was trained with a different vocabulary"
        )
    model = AdversarialTagger.from_config_dict(meta["config"])
    model.load_state_arrays(load_params(ckpt_path))
    return model, meta


# ---------------------------------------------------------------------------
# report rendering


def report_text(report: MetricReport, title: str = "disfluent-token metrics") -> str:
    lines = [f"# {title} ({report.averaging} averaged)"]
    for key, value in asdict(report).items():
        if isinstance(value, float):
            lines.append(f"{key}={value:.2f}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def report_json(report: MetricReport) -> str:
    return json.dumps(asdict(report), indent=2, sort_keys=True) + "\n"


def render_comparison(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned plain-text table comparing several models."""
    name_w = max([len("Model")] + [len(name) for name, _ in rows])
    header = f"{'Model':<{name_w}}  {'P':>6}  {'R':>6}  {'F1':>6}"
    out = [header, "-" * len(header)]
    for name, rep in rows:
        out.append(
            f"{name:<{name_w}}  {rep.precision:>6.2f}  {rep.recall:>6.2f}  {rep.f1:>6.2f}"
        )
    return "\n".join(out) + "\n"
