"""Text preprocessing: punctuation stripping, lower-casing, word tokens.

The pipeline is deliberately simple — remove every Unicode punctuation
character (category P*, which covers ASCII punctuation as well as the
Devanagari danda), lower-case, and split on whitespace. Stutter fragments
arrive as whitespace-separated words, so word-level tokens are enough.
"""

from __future__ import annotations

import hashlib
import sys
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus
from .errors import FormatError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Precomputed set of punctuation code points (categories Pc, Pd, Pe, Pf, Pi, Po, Ps).
_PUNCT = {
    chr(cp)
    for cp in range(sys.maxunicode + 1)
    if unicodedata.category(chr(cp)).startswith("P")
}
_STRIP_PUNCT = str.maketrans({ch: None for ch in _PUNCT})


def normalize(text: str) -> list[str]:
    """Strip punctuation, lower-case, and split into word tokens."""
    return text.translate(_STRIP_PUNCT).lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Dense token<->id mapping with PAD=0 and UNK=1 reserved."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int]
    min_freq: int = 1

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        """One token per line in id order, after a header line."""
        lines = [f"{len(self)}\t{PAD_ID}\t{UNK_ID}\t{self.min_freq}"]
        lines.extend(self.id_to_token)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise FormatError("empty vocabulary file", str(path))
        head = lines[0].split("\t")
        if len(head) != 4:
            raise FormatError("bad vocabulary header", str(path), 1)
        size, pad, unk, min_freq = (int(x) for x in head)
        tokens = tuple(lines[1 : 1 + size])
        if len(tokens) != size or pad != PAD_ID or unk != UNK_ID:
            raise FormatError("vocabulary header disagrees with body", str(path))
        return cls(tokens, {t: i for i, t in enumerate(tokens)}, min_freq)


def build_vocab(corpora: Iterable[Corpus], min_freq: int = 1) -> Vocabulary:
    """Build a vocabulary from every token in the given corpora.

    Tokens with frequency >= min_freq are kept, ordered by frequency
    descending then lexicographically, after the PAD/UNK specials.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for corpus in corpora:
        for pair in corpus.labeled:
            counts.update(pair.disfluent.tokens)
        for sent in corpus.unlabeled:
            counts.update(sent.tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    id_to_token = (PAD_TOKEN, UNK_TOKEN, *kept)
    return Vocabulary(id_to_token, {t: i for i, t in enumerate(id_to_token)}, min_freq)


def vocab_hash(vocab: Vocabulary) -> str:
    """Stable digest of a vocabulary, stored in checkpoint metadata."""
    h = hashlib.sha256()
    h.update(str(vocab.min_freq).encode())
    for tok in vocab.id_to_token:
        h.update(b"\x00")
        h.update(tok.encode("utf-8"))
    return h.hexdigest()


def encode(
    sentence: Sequence[str], vocab: Vocabulary, max_len: int
) -> tuple[list[int], list[int]]:
    """Map tokens to ids, truncating/padding to ``max_len``.

    Returns (ids, mask) both of length ``max_len``; mask is 1 on real tokens.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab.lookup(t) for t in sentence[:max_len]]
    mask = [1] * len(ids)
    pad = max_len - len(ids)
    return ids + [PAD_ID] * pad, mask + [0] * pad
