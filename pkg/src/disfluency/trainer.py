"""Adversarial semi-supervised training loop.

Per step: one discriminator update, then one generator update.

The discriminator loss is the sum of three terms: the supervised token
cross entropy over labeled real sentences, -log p_real over all real
sentences (labeled plus, when enabled, unlabeled), and -log(1 - p_real)
over generator output. Unlabeled sentences take part only in the real/fake
term — their gradient contribution to the token head is exactly zero.

The generator trains on the non-saturating fool objective plus feature
matching (squared distance between batch-mean pooled discriminator features
of real and fake data). During the discriminator update the fake sequences
are detached, and the generator update steps only generator parameters, so
the two updates never touch each other's weights.

Modes:
    supervised               token loss only; generator and real/fake head idle
    adversarial              adds the real/fake game, no unlabeled data
    adversarial+unlabeled    the full setup
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, zero_grads
from .checkpoint import save_metadata, save_params
from .corpus import Corpus, Label, ParallelPair
from .errors import EmptyBatchError, NumericError
from .evaluate import MetricReport, evaluate_model
from .model import (
    AdversarialTagger,
    DiscriminatorConfig,
    EncoderConfig,
    GeneratorConfig,
    HiddenSequence,
)
from .optim import Adam
from .textnorm import Vocabulary, encode, vocab_hash

MODE_SUPERVISED = "supervised"
MODE_ADVERSARIAL = "adversarial"
MODE_ADV_UNLABELED = "adversarial+unlabeled"
MODES = (MODE_SUPERVISED, MODE_ADVERSARIAL, MODE_ADV_UNLABELED)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch_labeled: int = 16
    batch_unlabeled: int = 16
    lr_d: float = 2e-3
    lr_g: float = 2e-3
    seed: int = 0
    mode: str = MODE_ADV_UNLABELED
    eval_every: int = 100
    feature_match_weight: float = 1.0
    val_fraction: float = 0.15

    def __post_init__(self):
        if self.steps < 1 or self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ValueError("steps and batch sizes must be positive")
        if self.lr_d <= 0 or self.lr_g <= 0:
            raise ValueError("learning rates must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class LossReport:
    step: int
    l_sup: float
    l_unsup_real: float
    l_unsup_fake: float
    l_d_total: float
    l_g_fool: float
    l_g_fm: float
    l_g_total: float

    HEADER = (
        "step",
        "l_sup",
        "l_unsup_real",
        "l_unsup_fake",
        "l_d_total",
        "l_g_fool",
        "l_g_fm",
        "l_g_total",
    )

    def row(self) -> list:
        return [getattr(self, name) for name in self.HEADER]


# ---------------------------------------------------------------------------
# batch preparation


@dataclass
class EncodedSet:
    ids: np.ndarray  # (N, L) int32
    mask: np.ndarray  # (N, L) float32
    labels: np.ndarray | None = None  # (N, L) int32; 1 = DISFLUENT

    def __len__(self) -> int:
        return self.ids.shape[0]

    def take(self, idx: np.ndarray) -> tuple:
        if self.labels is None:
            return self.ids[idx], self.mask[idx]
        return self.ids[idx], self.mask[idx], self.labels[idx]


def encode_labeled(pairs: Sequence[ParallelPair], vocab: Vocabulary, max_len: int) -> EncodedSet:
    n = len(pairs)
    ids = np.zeros((n, max_len), dtype=np.int32)
    mask = np.zeros((n, max_len), dtype=np.float32)
    labels = np.zeros((n, max_len), dtype=np.int32)
    for i, pair in enumerate(pairs):
        row_ids, row_mask = encode(pair.disfluent.tokens, vocab, max_len)
        ids[i] = row_ids
        mask[i] = row_mask
        for j, lab in enumerate(pair.disfluent.labels[:max_len]):
            labels[i, j] = 1 if lab is Label.DISFLUENT else 0
    return EncodedSet(ids, mask, labels)


def encode_unlabeled(sentences: Sequence, vocab: Vocabulary, max_len: int) -> EncodedSet:
    n = len(sentences)
    ids = np.zeros((n, max_len), dtype=np.int32)
    mask = np.zeros((n, max_len), dtype=np.float32)
    for i, sent in enumerate(sentences):
        tokens = sent.tokens if hasattr(sent, "tokens") else sent
        row_ids, row_mask = encode(tokens, vocab, max_len)
        ids[i] = row_ids
        mask[i] = row_mask
    return EncodedSet(ids, mask)


class _Batcher:
    """Yields fixed-size index batches, reshuffling each pass over the data."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n) if n else 0
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self.n == 0:
            return np.empty(0, dtype=np.int64)
        out = []
        need = self.batch_size
        while need:
            if self._pos >= len(self._order):
                self._order = self.rng.permutation(self.n)
                self._pos = 0
            take = min(need, len(self._order) - self._pos)
            out.append(self._order[self._pos : self._pos + take])
            self._pos += take
            need -= take
        return np.concatenate(out)


# ---------------------------------------------------------------------------
# losses


def d_loss(
    model: AdversarialTagger,
    labeled: tuple[np.ndarray, np.ndarray, np.ndarray],
    unlabeled: tuple[np.ndarray, np.ndarray] | None,
    fake: HiddenSequence | None,
) -> tuple[Tensor, dict]:
    """Discriminator objective; pass fake=None for the supervised baseline."""
    ids_l, mask_l, labels_l = labeled
    if ids_l.shape[0] == 0:
        raise EmptyBatchError("d_loss needs a non-empty labeled batch")
    out_l = model.discriminate(model.encode(ids_l, mask_l))
    l_sup = ad.cross_entropy(out_l.token_logits, labels_l, mask_l)
    if fake is None:
        zero = Tensor(np.zeros((), dtype=l_sup.data.dtype))
        parts = {"l_sup": l_sup.item(), "l_unsup_real": 0.0, "l_unsup_fake": 0.0}
        return l_sup + zero, parts
    p_real = [out_l.p_real]
    if unlabeled is not None and unlabeled[0].shape[0] > 0:
        out_u = model.discriminate(model.encode(*unlabeled))
        p_real.append(out_u.p_real)
    l_real = ad.binary_cross_entropy(ad.concat(p_real), 1.0)
    l_fake = ad.binary_cross_entropy(model.discriminate(fake).p_real, 0.0)
    parts = {
        "l_sup": l_sup.item(),
        "l_unsup_real": l_real.item(),
        "l_unsup_fake": l_fake.item(),
    }
    return l_sup + l_real + l_fake, parts


def g_loss(
    model: AdversarialTagger,
    fake: HiddenSequence,
    real_pooled: Tensor,
    feature_match_weight: float,
) -> tuple[Tensor, dict]:
    """Generator objective: fool the real/fake head and match real features.

    ``real_pooled`` should be detached; the generator never owns gradients
    of the real pathway.
    """
    if fake.hidden.data.shape[0] == 0 or real_pooled.data.shape[0] == 0:
        raise EmptyBatchError("g_loss needs non-empty fake and real batches")
    out_f = model.discriminate(fake)
    l_fool = ad.binary_cross_entropy(out_f.p_real, 1.0)
    diff = ad.mean_axis(out_f.pooled, 0) - ad.mean_axis(real_pooled, 0)
    l_fm = ad.l2_squared(diff)
    total = l_fool + l_fm * feature_match_weight
    return total, {"l_g_fool": l_fool.item(), "l_g_fm": l_fm.item()}


# ---------------------------------------------------------------------------
# the loop


class Trainer:
    def __init__(
        self,
        model: AdversarialTagger,
        labeled: EncodedSet,
        unlabeled: EncodedSet,
        cfg: TrainConfig,
    ):
        if len(labeled) == 0:
            raise EmptyBatchError("training needs at least one labeled pair")
        self.model = model
        self.labeled = labeled
        self.unlabeled = unlabeled
        self.cfg = cfg
        root = np.random.SeedSequence(cfg.seed)
        batch_ss, noise_ss = root.spawn(2)
        self._rng_batch = np.random.default_rng(batch_ss)
        self._rng_noise = np.random.default_rng(noise_ss)
        self._lab_batcher = _Batcher(len(labeled), cfg.batch_labeled, self._rng_batch)
        use_unlabeled = cfg.mode == MODE_ADV_UNLABELED and len(unlabeled) > 0
        self._unl_batcher = (
            _Batcher(len(unlabeled), cfg.batch_unlabeled, self._rng_batch)
            if use_unlabeled
            else None
        )
        self.opt_d = Adam(model.d_parameters(), lr=cfg.lr_d)
        self.opt_g = Adam(model.g_parameters(), lr=cfg.lr_g)
        self.step_count = 0

    def _noise(self, n: int) -> np.ndarray:
        z = self._rng_noise.standard_normal((n, self.model.gen_cfg.noise_dim))
        return z.astype(self.model.dtype)

    def train_step(self) -> LossReport:
        cfg = self.cfg
        model = self.model
        self.step_count += 1
        lab = self.labeled.take(self._lab_batcher.next())
        unl = (
            self.unlabeled.take(self._unl_batcher.next())
            if self._unl_batcher is not None
            else None
        )
        adversarial = cfg.mode != MODE_SUPERVISED

        # discriminator update; fake sequences detached so the generator is frozen
        if adversarial:
            n_fake = lab[0].shape[0] + (unl[0].shape[0] if unl is not None else 0)
            fake = model.generate(self._noise(n_fake))
            fake = HiddenSequence(fake.hidden.detach(), fake.mask)
        else:
            fake = None
        d_total, d_parts = d_loss(model, lab, unl, fake)
        self._check_finite(d_total)
        backward(d_total)
        self.opt_d.step()
        zero_grads(model.parameters())

        # generator update; only generator parameters step
        if adversarial:
            fake2 = model.generate(self._noise(n_fake))
            real_parts = [model.discriminate(model.encode(lab[0], lab[1])).pooled]
            if unl is not None:
                real_parts.append(model.discriminate(model.encode(*unl)).pooled)
            real_pooled = ad.concat(real_parts).detach()
            g_total, g_parts = g_loss(model, fake2, real_pooled, cfg.feature_match_weight)
            self._check_finite(g_total)
            backward(g_total)
            self.opt_g.step()
            zero_grads(model.parameters())
        else:
            g_parts = {"l_g_fool": 0.0, "l_g_fm": 0.0}

        return LossReport(
            step=self.step_count,
            l_sup=d_parts["l_sup"],
            l_unsup_real=d_parts["l_unsup_real"],
            l_unsup_fake=d_parts["l_unsup_fake"],
            l_d_total=d_parts["l_sup"] + d_parts["l_unsup_real"] + d_parts["l_unsup_fake"],
            l_g_fool=g_parts["l_g_fool"],
            l_g_fm=g_parts["l_g_fm"],
            l_g_total=g_parts["l_g_fool"] + cfg.feature_match_weight * g_parts["l_g_fm"],
        )

    def _check_finite(self, loss: Tensor) -> None:
        if not np.isfinite(loss.data):
            raise NumericError(f"non-finite loss at step {self.step_count}")


@dataclass
class TrainResult:
    model: AdversarialTagger
    vocab: Vocabulary
    history: list[LossReport]
    evals: list[tuple[int, MetricReport]]
    best_step: int
    best_f1: float
    best_checkpoint: Path | None = None
    final_checkpoint: Path | None = None
    history_path: Path | None = None


def _split_validation(
    pairs: Sequence[ParallelPair], fraction: float, seed: int
) -> tuple[list[ParallelPair], list[ParallelPair]]:
    if fraction <= 0 or len(pairs) < 4:
        return list(pairs), list(pairs)
    n_val = max(1, int(round(len(pairs) * fraction)))
    order = np.random.default_rng(np.random.SeedSequence([seed, 7001])).permutation(len(pairs))
    val = [pairs[i] for i in order[:n_val]]
    train = [pairs[i] for i in order[n_val:]]
    return train, val


def train(
    corpus: Corpus,
    vocab: Vocabulary,
    cfg: TrainConfig,
    enc_cfg: EncoderConfig | None = None,
    gen_cfg: GeneratorConfig = GeneratorConfig(),
    disc_cfg: DiscriminatorConfig = DiscriminatorConfig(),
    out_dir: str | Path | None = None,
    val_pairs: Sequence[ParallelPair] | None = None,
) -> TrainResult:
    """Train a tagger on a mixed corpus; keeps the best-validation-F1 weights.

    A validation slice is carved from the labeled pairs unless ``val_pairs``
    is supplied. With ``out_dir`` set, writes best/final checkpoints (plus
    metadata sidecars) and the per-step loss history CSV.
    """
    if not corpus.labeled:
        raise EmptyBatchError("corpus has no labeled pairs")
    if enc_cfg is None:
        enc_cfg = EncoderConfig(vocab_size=len(vocab))
    if enc_cfg.vocab_size != len(vocab):
        raise ValueError("enc_cfg.vocab_size must match the vocabulary")

    if val_pairs is None:
        train_pairs, val_list = _split_validation(
            corpus.labeled, cfg.val_fraction, cfg.seed
        )
    else:
        train_pairs, val_list = list(corpus.labeled), list(val_pairs)

    model = AdversarialTagger(enc_cfg, gen_cfg, disc_cfg, seed=cfg.seed)
    labeled = encode_labeled(train_pairs, vocab, enc_cfg.max_len)
    use_unl = cfg.mode == MODE_ADV_UNLABELED
    unlabeled = encode_unlabeled(corpus.unlabeled if use_unl else (), vocab, enc_cfg.max_len)
    loop = Trainer(model, labeled, unlabeled, cfg)

    history: list[LossReport] = []
    evals: list[tuple[int, MetricReport]] = []
    best_f1 = -1.0
    best_step = 0
    best_state: dict[str, np.ndarray] | None = None
    for step in range(1, cfg.steps + 1):
        history.append(loop.train_step())
        if step % cfg.eval_every == 0 or step == cfg.steps:
            report = evaluate_model(model, val_list, vocab)
            evals.append((step, report))
            if report.f1 > best_f1:
                best_f1 = report.f1
                best_step = step
                best_state = {k: v.copy() for k, v in model.state_arrays().items()}

    result = TrainResult(model, vocab, history, evals, best_step, best_f1)
    meta_common = {
        "config": model.config_dict(),
        "vocab_hash": vocab_hash(vocab),
        "mode": cfg.mode,
        "seed": cfg.seed,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        final = out_dir / "final.ckpt"
        save_params(model.state_arrays(), final)
        save_metadata(final, {**meta_common, "step": cfg.steps})
        result.final_checkpoint = final
    if best_state is not None:
        model.load_state_arrays(best_state)
    if out_dir is not None:
        best = out_dir / "best.ckpt"
        save_params(model.state_arrays(), best)
        save_metadata(best, {**meta_common, "step": best_step, "val_f1": best_f1})
        result.best_checkpoint = best
        hist = out_dir / "history.csv"
        write_history(history, evals, hist)
        result.history_path = hist
        vocab.save(out_dir / "vocab.txt")
    return result


def write_history(
    history: Sequence[LossReport],
    evals: Sequence[tuple[int, MetricReport]],
    path: str | Path,
) -> None:
    f1_at = {step: rep.f1 for step, rep in evals}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(LossReport.HEADER) + ["eval_f1"])
        for rec in history:
            f1 = f1_at.get(rec.step)
            writer.writerow(rec.row() + ["" if f1 is None else f1])
