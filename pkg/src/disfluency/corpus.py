"""Data model and on-disk formats for disfluency corpora.

A corpus holds labeled parallel pairs (a disfluent sentence with per-token
fluent/disfluent tags plus its fluent side) and unlabeled raw sentences.
Everything is immutable after construction; utilities build new values.

Canonical serialization is JSONL, one object per sentence:

    {"tokens": [...], "labels": ["F","D",...], "fluent": [...], "lang": "bn"}
    {"tokens": [...], "provenance": "hi"}          # unlabeled sentence

TSV is accepted for interop: ``token<TAB>label`` per line, blank line between
sentences, optional ``# lang: xx`` header. Lines without a tab are read as
unlabeled sentences (one token per line).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import AlignmentError, FormatError, LengthMismatchError, RangeError

CorpusFormat = Literal["jsonl", "tsv"]


class Label(enum.Enum):
    """Per-token tag. Serialized as "F" / "D"."""

    FLUENT = "F"
    DISFLUENT = "D"

    def __repr__(self) -> str:  # keeps test failure output readable
        return self.value


class DisfluencyType(enum.Enum):
    """The six conversational disfluency categories plus stutter fragments."""

    FILLED_PAUSE = "filled_pause"
    INTERJECTION = "interjection"
    DISCOURSE_MARKER = "discourse_marker"
    REPETITION_CORRECTION = "repetition_correction"
    FALSE_START = "false_start"
    EDIT = "edit"
    STUTTER = "stutter"


def _check_tokens(tokens: Sequence[str], what: str) -> None:
    if len(tokens) < 1:
        raise FormatError(f"{what} must contain at least one token")
    for tok in tokens:
        if not tok:
            raise FormatError(f"{what} contains an empty token")
        if any(ch.isspace() for ch in tok):
            raise FormatError(f"{what} token {tok!r} contains whitespace")


@dataclass(frozen=True)
class TaggedSentence:
    """Word tokens with aligned fluent/disfluent labels and a language tag."""

    tokens: tuple[str, ...]
    labels: tuple[Label, ...]
    language: str = "und"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        _check_tokens(self.tokens, "sentence")
        if len(self.tokens) != len(self.labels):
            raise LengthMismatchError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )

    def fluent_side(self) -> tuple[str, ...]:
        """Tokens that survive disfluency removal, in order."""
        return tuple(
            t for t, l in zip(self.tokens, self.labels) if l is Label.FLUENT
        )


@dataclass(frozen=True)
class ParallelPair:
    """A disfluent sentence aligned with its fluent rendition.

    Invariant: dropping DISFLUENT tokens from the disfluent side reproduces
    ``fluent`` exactly.
    """

    disfluent: TaggedSentence
    fluent: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fluent", tuple(self.fluent))
        recovered = self.disfluent.fluent_side()
        if recovered != self.fluent:
            raise AlignmentError(
                f"fluent side {list(self.fluent)} does not match filtered "
                f"disfluent tokens {list(recovered)}"
            )


@dataclass(frozen=True)
class UnlabeledSentence:
    """A raw token sequence with a record of where it came from."""

    tokens: tuple[str, ...]
    provenance: str = "und"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        _check_tokens(self.tokens, "unlabeled sentence")


@dataclass(frozen=True)
class Corpus:
    """Labeled pairs plus unlabeled sentences under one language tag."""

    labeled: tuple[ParallelPair, ...] = ()
    unlabeled: tuple[UnlabeledSentence, ...] = ()
    language: str = "und"

    def __post_init__(self) -> None:
        object.__setattr__(self, "labeled", tuple(self.labeled))
        object.__setattr__(self, "unlabeled", tuple(self.unlabeled))
        if not self.language:
            raise FormatError("corpus language tag must be non-empty")

    def __len__(self) -> int:
        return len(self.labeled) + len(self.unlabeled)


# ---------------------------------------------------------------------------
# JSONL


def _pair_from_record(rec: dict, path: str, line_no: int, default_lang: str) -> ParallelPair:
    tokens = rec.get("tokens")
    labels = rec.get("labels")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise FormatError("'tokens' must be a list of strings", path, line_no)
    if not isinstance(labels, list):
        raise FormatError("'labels' must be a list", path, line_no)
    if len(tokens) != len(labels):
        raise LengthMismatchError(
            f"{len(tokens)} tokens but {len(labels)} labels", path, line_no
        )
    try:
        parsed = tuple(Label(l) for l in labels)
    except ValueError as exc:
        raise FormatError(f"bad label value: {exc}", path, line_no) from None
    try:
        sent = TaggedSentence(tuple(tokens), parsed, rec.get("lang", default_lang))
    except FormatError as exc:
        raise FormatError(str(exc), path, line_no) from None
    fluent = rec.get("fluent")
    if fluent is None:
        fluent = sent.fluent_side()
    elif not isinstance(fluent, list) or not all(isinstance(t, str) for t in fluent):
        raise FormatError("'fluent' must be a list of strings", path, line_no)
    try:
        return ParallelPair(sent, tuple(fluent))
    except AlignmentError as exc:
        raise AlignmentError(f"{path}:{line_no}: {exc}") from None


def _load_jsonl(path: Path) -> Corpus:
    labeled: list[ParallelPair] = []
    unlabeled: list[UnlabeledSentence] = []
    language = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", str(path), line_no) from None
            if not isinstance(rec, dict):
                raise FormatError("record must be a JSON object", str(path), line_no)
            if "labels" in rec:
                pair = _pair_from_record(rec, str(path), line_no, language or "und")
                labeled.append(pair)
                if language is None:
                    language = pair.disfluent.language
            else:
                tokens = rec.get("tokens")
                if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                    raise FormatError("'tokens' must be a list of strings", str(path), line_no)
                try:
                    unlabeled.append(
                        UnlabeledSentence(tuple(tokens), rec.get("provenance", "und"))
                    )
                except FormatError as exc:
                    raise FormatError(str(exc), str(path), line_no) from None
    return Corpus(tuple(labeled), tuple(unlabeled), language or "und")


def _dump_jsonl(corpus: Corpus) -> str:
    lines = []
    for pair in corpus.labeled:
        rec = {
            "tokens": list(pair.disfluent.tokens),
            "labels": [l.value for l in pair.disfluent.labels],
            "fluent": list(pair.fluent),
            "lang": pair.disfluent.language,
        }
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    for sent in corpus.unlabeled:
        rec = {"tokens": list(sent.tokens), "provenance": sent.provenance}
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# TSV


def _load_tsv(path: Path) -> Corpus:
    labeled: list[ParallelPair] = []
    unlabeled: list[UnlabeledSentence] = []
    language = "und"
    cur_tokens: list[str] = []
    cur_labels: list[Label | None] = []
    start_line = 0

    def flush(line_no: int) -> None:
        if not cur_tokens:
            return
        has_labels = [l for l in cur_labels if l is not None]
        if has_labels and len(has_labels) != len(cur_tokens):
            raise LengthMismatchError(
                "sentence mixes labeled and unlabeled lines", str(path), start_line
            )
        if has_labels:
            sent = TaggedSentence(tuple(cur_tokens), tuple(has_labels), language)
            labeled.append(ParallelPair(sent, sent.fluent_side()))
        else:
            unlabeled.append(UnlabeledSentence(tuple(cur_tokens), language))
        cur_tokens.clear()
        cur_labels.clear()

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                meta = line[1:].strip()
                if meta.startswith("lang:"):
                    language = meta.split(":", 1)[1].strip() or "und"
                continue
            if not line.strip():
                flush(line_no)
                continue
            if not cur_tokens:
                start_line = line_no
            parts = line.split("\t")
            if len(parts) == 1:
                cur_tokens.append(parts[0].strip())
                cur_labels.append(None)
            elif len(parts) == 2:
                cur_tokens.append(parts[0].strip())
                try:
                    cur_labels.append(Label(parts[1].strip()))
                except ValueError:
                    raise FormatError(
                        f"bad label {parts[1].strip()!r}", str(path), line_no
                    ) from None
            else:
                raise FormatError("expected 'token<TAB>label'", str(path), line_no)
        flush(line_no=0)
    return Corpus(tuple(labeled), tuple(unlabeled), language)


def _dump_tsv(corpus: Corpus) -> str:
    blocks = [f"# lang: {corpus.language}"]
    for pair in corpus.labeled:
        blocks.append(
            "\n".join(
                f"{t}\t{l.value}"
                for t, l in zip(pair.disfluent.tokens, pair.disfluent.labels)
            )
        )
    for sent in corpus.unlabeled:
        blocks.append("\n".join(sent.tokens))
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# Public operations


def load_corpus(path: str | Path, format: CorpusFormat = "jsonl") -> Corpus:
    """Load and validate a corpus file; bad records raise with their line number."""
    path = Path(path)
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "tsv":
        return _load_tsv(path)
    raise ValueError(f"unknown corpus format {format!r}")


def save_corpus(corpus: Corpus, path: str | Path, format: CorpusFormat = "jsonl") -> None:
    """Write a corpus; JSONL output is canonical and byte-stable."""
    if format == "jsonl":
        text = _dump_jsonl(corpus)
    elif format == "tsv":
        text = _dump_tsv(corpus)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    Path(path).write_text(text, encoding="utf-8")


def split_corpus(corpus: Corpus, n_train: int, seed: int) -> tuple[Corpus, Corpus]:
    """Deterministic shuffled split of the labeled pairs.

    The train side gets ``n_train`` pairs and all unlabeled sentences; the
    test side gets the remaining pairs and no unlabeled data.
    """
    if not 0 <= n_train <= len(corpus.labeled):
        raise RangeError(
            f"n_train={n_train} outside [0, {len(corpus.labeled)}]"
        )
    order = np.random.default_rng(seed).permutation(len(corpus.labeled))
    train_pairs = tuple(corpus.labeled[i] for i in order[:n_train])
    test_pairs = tuple(corpus.labeled[i] for i in order[n_train:])
    train = Corpus(train_pairs, corpus.unlabeled, corpus.language)
    test = Corpus(test_pairs, (), corpus.language)
    return train, test


def mix_corpora(labeled_src: Corpus, unlabeled_src: Corpus) -> Corpus:
    """Combine a labeled corpus with another corpus used purely as unlabeled data.

    Every sentence of ``unlabeled_src`` (its unlabeled ones, plus its labeled
    pairs stripped of their labels) becomes unlabeled data; provenance records
    the source language of each sentence.
    """
    extra = list(unlabeled_src.unlabeled)
    for pair in unlabeled_src.labeled:
        extra.append(
            UnlabeledSentence(pair.disfluent.tokens, pair.disfluent.language)
        )
    return Corpus(labeled_src.labeled, tuple(extra), labeled_src.language)
