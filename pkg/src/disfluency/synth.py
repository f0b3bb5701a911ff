"""Rule-based injection of disfluencies into fluent sentences.

Each disfluency type has one injection rule. Rules only ever *insert*
tokens labeled DISFLUENT (or duplicate existing material, labeling the
earlier copy DISFLUENT), so dropping DISFLUENT tokens always recovers the
source sentence exactly; this recovery invariant is what makes the output
usable as parallel training data.

Corpus-level generation follows a planned two-phase scheme so that results
are reproducible and independent of worker count when parallelized:

1. plan: for every sentence, pre-draw up to ``max_injections_per_sentence``
   injections (type, lexicon picks, window sizes) from a per-sentence rng
   derived as SeedSequence([seed, index, 0]). Each planned injection has a
   known disfluent-token count.
2. select: a sequential greedy sweep (round-robin over sentences) switches
   planned injections on until the corpus-level disfluent fraction reaches
   the budget, then stops; a sentence whose next injection would overshoot
   the band is closed.
3. apply: per sentence, the selected plan prefix is applied with a second
   per-sentence rng (SeedSequence([seed, index, 1])), which draws only
   insertion positions and stutter fragments.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, DisfluencyType, Label, ParallelPair, TaggedSentence
from .errors import BudgetUnreachableError, FormatError, LexiconError, PreconditionError
from .textnorm import normalize

_DEFAULT_LEXICON = Path(__file__).parent / "lexicons" / "en.lex"


@dataclass(frozen=True)
class Lexicons:
    """Token material for the insertion rules, one set per language."""

    filled_pauses: tuple[str, ...]
    interjections: tuple[str, ...]
    discourse_markers: tuple[tuple[str, ...], ...]
    edit_phrases: tuple[tuple[str, ...], ...]
    language: str = "en"

    @classmethod
    def load(cls, path: str | Path, language: str | None = None) -> "Lexicons":
        """Read a sectioned lexicon file.

        Sections are ``[filled_pauses]``, ``[interjections]``,
        ``[discourse_markers]``, ``[edit_phrases]``; one entry per line,
        multi-word entries space-separated. Entries are normalized on load.
        """
        path = Path(path)
        sections: dict[str, list[tuple[str, ...]]] = {
            "filled_pauses": [],
            "interjections": [],
            "discourse_markers": [],
            "edit_phrases": [],
        }
        current: list[tuple[str, ...]] | None = None
        for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if name not in sections:
                    raise FormatError(f"unknown lexicon section {name!r}", str(path), line_no)
                current = sections[name]
                continue
            if current is None:
                raise FormatError("entry before any section header", str(path), line_no)
            toks = tuple(normalize(line))
            if toks:
                current.append(toks)
        flat = lambda entries: tuple(t for e in entries for t in e)
        return cls(
            filled_pauses=flat(sections["filled_pauses"]),
            interjections=flat(sections["interjections"]),
            discourse_markers=tuple(sections["discourse_markers"]),
            edit_phrases=tuple(sections["edit_phrases"]),
            language=language or path.stem,
        )

    @classmethod
    def default(cls) -> "Lexicons":
        return cls.load(_DEFAULT_LEXICON, language="en")


def default_type_weights() -> dict[DisfluencyType, float]:
    """Uniform over the six conversational types; stutter off by default."""
    w = {t: 1.0 for t in DisfluencyType}
    w[DisfluencyType.STUTTER] = 0.0
    return w


@dataclass(frozen=True)
class SynthConfig:
    budget: float = 0.2
    type_weights: dict = field(default_factory=default_type_weights)
    max_injections_per_sentence: int = 3
    stutter_max_fragments: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.budget < 1.0:
            raise ValueError("budget must be in (0, 1)")
        if self.max_injections_per_sentence < 1 or self.stutter_max_fragments < 1:
            raise ValueError("injection counts must be >= 1")
        weights = {t: float(self.type_weights.get(t, 0.0)) for t in DisfluencyType}
        if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
            raise ValueError("type_weights need at least one positive weight")
        object.__setattr__(self, "type_weights", weights)


BUDGET_TOLERANCE = 0.02


def stutter_fragment(word: str, rng: np.random.Generator) -> str:
    """A strict prefix of ``word``, 1 to min(3, len-1) characters."""
    if len(word) < 2:
        raise PreconditionError(f"cannot stutter 1-character word {word!r}")
    return word[: rng.integers(1, min(3, len(word) - 1) + 1)]


# ---------------------------------------------------------------------------
# planning


@dataclass(frozen=True)
class _Planned:
    dtype: DisfluencyType
    size: int  # disfluent tokens this injection adds
    material: tuple[str, ...] = ()  # pre-drawn lexicon tokens, if any
    window: int = 0  # repetition window / false-start fragment / stutter count


def _valid_types(tokens: Sequence[str], weights: dict) -> list[DisfluencyType]:
    valid = []
    for t, w in weights.items():
        if w <= 0:
            continue
        if t is DisfluencyType.FALSE_START and len(tokens) < 2:
            continue
        if t is DisfluencyType.STUTTER and not any(len(tok) >= 2 for tok in tokens):
            continue
        valid.append(t)
    return valid


def _require(entries: Sequence, what: str):
    if not entries:
        raise LexiconError(f"lexicon has no {what}")
    return entries


def _plan_one(
    tokens: Sequence[str],
    dtype: DisfluencyType,
    rng: np.random.Generator,
    lex: Lexicons,
    stutter_max_fragments: int,
    word_pool: Sequence[str] | None,
) -> _Planned:
    if dtype is DisfluencyType.FILLED_PAUSE:
        pauses = _require(lex.filled_pauses, "filled pauses")
        return _Planned(dtype, 1, (pauses[rng.integers(len(pauses))],))
    if dtype is DisfluencyType.INTERJECTION:
        inter = _require(lex.interjections, "interjections")
        return _Planned(dtype, 1, (inter[rng.integers(len(inter))],))
    if dtype is DisfluencyType.DISCOURSE_MARKER:
        markers = _require(lex.discourse_markers, "discourse markers")
        marker = markers[rng.integers(len(markers))]
        return _Planned(dtype, len(marker), tuple(marker))
    if dtype is DisfluencyType.REPETITION_CORRECTION:
        if len(tokens) < 1:
            raise PreconditionError("repetition needs at least one token")
        w = int(rng.integers(1, min(2, len(tokens)) + 1))
        return _Planned(dtype, w, (), w)
    if dtype is DisfluencyType.FALSE_START:
        if len(tokens) < 2:
            raise PreconditionError("false start needs at least two tokens")
        frag = int(rng.integers(1, min(3, len(tokens) - 1) + 1))
        return _Planned(dtype, frag, (), frag)
    if dtype is DisfluencyType.EDIT:
        phrases = _require(lex.edit_phrases, "edit phrases")
        phrase = phrases[rng.integers(len(phrases))]
        pool = tuple(word_pool) if word_pool else tuple(tokens)
        corrupt = pool[rng.integers(len(pool))]
        return _Planned(dtype, 1 + len(phrase), (corrupt, *phrase))
    if dtype is DisfluencyType.STUTTER:
        if not any(len(tok) >= 2 for tok in tokens):
            raise PreconditionError("stutter needs a word of length >= 2")
        m = int(rng.integers(1, stutter_max_fragments + 1))
        return _Planned(dtype, m, (), m)
    raise ValueError(f"unknown disfluency type {dtype}")


# ---------------------------------------------------------------------------
# application


def _apply_one(
    tagged: list[tuple[str, Label]],
    fluent: Sequence[str],
    plan: _Planned,
    rng: np.random.Generator,
) -> None:
    D = Label.DISFLUENT
    n = len(tagged)
    if plan.dtype is DisfluencyType.FILLED_PAUSE:
        pos = int(rng.integers(0, n + 1))
        tagged.insert(pos, (plan.material[0], D))
    elif plan.dtype is DisfluencyType.INTERJECTION:
        pos = 0 if rng.random() < 0.7 else int(rng.integers(0, n + 1))
        tagged.insert(pos, (plan.material[0], D))
    elif plan.dtype is DisfluencyType.DISCOURSE_MARKER:
        tagged[0:0] = [(t, D) for t in plan.material]
    elif plan.dtype is DisfluencyType.REPETITION_CORRECTION:
        w = plan.window
        start = int(rng.integers(0, n - w + 1))
        copy = [(tok, D) for tok, _ in tagged[start : start + w]]
        tagged[start:start] = copy
    elif plan.dtype is DisfluencyType.FALSE_START:
        frag = fluent[len(fluent) - plan.window :]
        tagged[0:0] = [(t, D) for t in frag]
    elif plan.dtype is DisfluencyType.EDIT:
        targets = [i for i, (_, l) in enumerate(tagged) if l is Label.FLUENT]
        pos = targets[rng.integers(len(targets))]
        tagged[pos:pos] = [(t, D) for t in plan.material]
    elif plan.dtype is DisfluencyType.STUTTER:
        candidates = [
            i for i, (tok, l) in enumerate(tagged) if l is Label.FLUENT and len(tok) >= 2
        ]
        pos = candidates[rng.integers(len(candidates))]
        frag = stutter_fragment(tagged[pos][0], rng)
        tagged[pos:pos] = [(frag, D)] * plan.window
    else:
        raise ValueError(f"unknown disfluency type {plan.dtype}")


def _apply_plans(
    fluent: Sequence[str],
    plans: Sequence[_Planned],
    rng: np.random.Generator,
    language: str,
) -> ParallelPair:
    tagged = [(tok, Label.FLUENT) for tok in fluent]
    for plan in plans:
        _apply_one(tagged, fluent, plan, rng)
    sent = TaggedSentence(
        tuple(t for t, _ in tagged), tuple(l for _, l in tagged), language
    )
    return ParallelPair(sent, tuple(fluent))


def _rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


def inject(
    fluent: Sequence[str],
    dtype: DisfluencyType,
    rng: np.random.Generator,
    lex: Lexicons,
    stutter_max_fragments: int = 2,
    word_pool: Sequence[str] | None = None,
) -> ParallelPair:
    """Inject a single disfluency of the given type into a fluent sentence."""
    fluent = tuple(fluent)
    if not fluent:
        raise PreconditionError("cannot inject into an empty sentence")
    plan = _plan_one(fluent, dtype, rng, lex, stutter_max_fragments, word_pool)
    tagged = [(tok, Label.FLUENT) for tok in fluent]
    _apply_one(tagged, fluent, plan, rng)
    sent = TaggedSentence(
        tuple(t for t, _ in tagged), tuple(l for _, l in tagged), lex.language
    )
    return ParallelPair(sent, fluent)


# ---------------------------------------------------------------------------
# corpus-level generation


@dataclass
class SynthStats:
    achieved_fraction: float
    per_type: dict[DisfluencyType, int]
    n_sentences: int
    n_injections: int


def _worker(args) -> ParallelPair:
    fluent, plans, seed, index, language = args
    return _apply_plans(fluent, plans, _rng(seed, index, 1), language)


def synthesize_with_stats(
    fluent_sentences: Sequence[Sequence[str]],
    cfg: SynthConfig,
    lex: Lexicons,
    language: str | None = None,
    jobs: int = 1,
) -> tuple[Corpus, SynthStats]:
    """synthesize_corpus plus achieved-budget / per-type statistics."""
    sentences = [tuple(s) for s in fluent_sentences]
    for i, s in enumerate(sentences):
        if not s:
            raise PreconditionError(f"fluent sentence {i} is empty")
    language = language or lex.language
    word_pool = sorted(set(t for s in sentences for t in s))

    # phase 1: per-sentence plans with known disfluent-token counts
    all_plans: list[list[_Planned]] = []
    for i, sent in enumerate(sentences):
        rng = _rng(cfg.seed, i, 0)
        valid = _valid_types(sent, cfg.type_weights)
        plans: list[_Planned] = []
        if valid:
            weights = np.array([cfg.type_weights[t] for t in valid])
            weights = weights / weights.sum()
            for _ in range(cfg.max_injections_per_sentence):
                dtype = valid[rng.choice(len(valid), p=weights)]
                plans.append(
                    _plan_one(sent, dtype, rng, lex, cfg.stutter_max_fragments, word_pool)
                )
        all_plans.append(plans)

    # phase 2: greedy selection against the budget
    fluent_total = sum(len(s) for s in sentences)
    d_center = cfg.budget / (1.0 - cfg.budget) * fluent_total
    hi = cfg.budget + BUDGET_TOLERANCE
    d_hi = hi / (1.0 - hi) * fluent_total
    taken = [0] * len(sentences)
    closed = [not p for p in all_plans]
    d_total = 0
    for round_no in range(cfg.max_injections_per_sentence):
        if d_total >= d_center:
            break
        for i, plans in enumerate(all_plans):
            if d_total >= d_center:
                break
            if closed[i] or round_no >= len(plans):
                continue
            size = plans[round_no].size
            if d_total + size > d_hi:
                closed[i] = True
                continue
            taken[i] += 1
            d_total += size

    achieved = d_total / (d_total + fluent_total)
    if abs(achieved - cfg.budget) > BUDGET_TOLERANCE + 1e-12:
        raise BudgetUnreachableError(
            cfg.budget, achieved, cfg.max_injections_per_sentence
        )

    # phase 3: apply selected plan prefixes
    tasks = [
        (sent, all_plans[i][: taken[i]], cfg.seed, i, language)
        for i, sent in enumerate(sentences)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(_worker, tasks, chunksize=64))
    else:
        pairs = [_worker(t) for t in tasks]

    per_type = {t: 0 for t in DisfluencyType}
    for i, plans in enumerate(all_plans):
        for plan in plans[: taken[i]]:
            per_type[plan.dtype] += 1
    stats = SynthStats(achieved, per_type, len(sentences), sum(taken))
    return Corpus(tuple(pairs), (), language), stats


def synthesize_corpus(
    fluent_sentences: Sequence[Sequence[str]],
    cfg: SynthConfig,
    lex: Lexicons,
    language: str | None = None,
    jobs: int = 1,
) -> Corpus:
    """One labeled ParallelPair per input sentence, meeting cfg.budget ±2pp."""
    corpus, _ = synthesize_with_stats(fluent_sentences, cfg, lex, language, jobs)
    return corpus
