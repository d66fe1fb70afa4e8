"""Hashed character-window features and sentence segmentation.

Every character position fires a small multiset of string features (character
unigrams and bigrams at relative offsets, character-class flags, a bias);
strings are hashed into ``[0, hash_dim)`` with CRC-32, so features are stable
across processes and Python versions.
"""

from __future__ import annotations

import unicodedata
import zlib
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

SENTENCE_DELIMITERS = frozenset("。！？；\n")
MAX_SEGMENT = 256
PAD_LEFT, PAD_RIGHT = "<s>", "</s>"


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 2
    hash_dim: int = 2 ** 20
    bigrams: bool = True
    char_classes: bool = True

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError("hash_dim must be a power of two")

    def to_dict(self) -> dict:
        return asdict(self)


def char_class(c: str) -> str:
    if c.isdigit():
        return "digit"
    if "a" <= c.lower() <= "z":
        return "latin"
    if c.isspace():
        return "space"
    if "一" <= c <= "鿿" or "㐀" <= c <= "䶿":
        return "cjk"
    if unicodedata.category(c).startswith("P"):
        return "punct"
    return "other"


def feature_strings(text: str, t: int, config: FeatureConfig) -> list[str]:
    """Feature names fired at position ``t`` (duplicates are meaningful)."""
    w = config.window
    n = len(text)

    def ch(i):
        if i < 0:
            return PAD_LEFT
        if i >= n:
            return PAD_RIGHT
        return text[i]

    feats = ["BIAS"]
    for o in range(-w, w + 1):
        feats.append(f"U{o}:{ch(t + o)}")
    if config.bigrams:
        for o in range(-w, w):
            feats.append(f"B{o}:{ch(t + o)}|{ch(t + o + 1)}")
    if config.char_classes:
        for o in range(-min(w, 1), min(w, 1) + 1):
            i = t + o
            feats.append(f"K{o}:{char_class(text[i]) if 0 <= i < n else 'pad'}")
    return feats


def hash_feature(name: str, hash_dim: int) -> int:
    return zlib.crc32(name.encode("utf-8")) & (hash_dim - 1)


def featurize(text: str, config: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """CSR-style hashed features: ``(indptr, ids)`` with ``len(indptr) == T + 1``."""
    indptr = [0]
    ids: list[int] = []
    cache: dict[str, int] = {}
    for t in range(len(text)):
        for name in feature_strings(text, t, config):
            h = cache.get(name)
            if h is None:
                h = cache[name] = hash_feature(name, config.hash_dim)
            ids.append(h)
        indptr.append(len(ids))
    return np.asarray(indptr, dtype=np.int64), np.asarray(ids, dtype=np.int64)


class FeatureIndex:
    """Maps hashed feature ids onto compact weight rows.

    Only ids observed during training get a row. A hashed id with no row
    contributes nothing, which is exactly what a zero-initialised dense
    ``hash_dim`` table would give for a feature that never received gradient.
    """

    def __init__(self, ids: Iterable[int] | np.ndarray = ()):
        self.ids = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids,
                                        dtype=np.int64))

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray]) -> "FeatureIndex":
        arrays = [a for a in arrays if len(a)]
        return cls(np.concatenate(arrays) if arrays else np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.ids)

    def lookup(self, hashed: np.ndarray) -> np.ndarray:
        """Row per hashed id, ``-1`` where unknown."""
        if len(self.ids) == 0:
            return np.full(len(hashed), -1, dtype=np.int64)
        pos = np.searchsorted(self.ids, hashed)
        pos = np.minimum(pos, len(self.ids) - 1)
        return np.where(self.ids[pos] == hashed, pos, -1)

    def matrix(self, indptr: np.ndarray, hashed: np.ndarray) -> sp.csr_matrix:
        """Count matrix ``[positions x len(self)]``; repeated ids sum."""
        rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
        cols = self.lookup(hashed)
        keep = cols >= 0
        return sp.csr_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])),
                             shape=(len(indptr) - 1, len(self)))


def segment(text: str, protected: Sequence[tuple[int, int]] = (),
            max_len: int = MAX_SEGMENT) -> list[tuple[int, int]]:
    """Sentence spans covering ``text``.

    Cuts follow 。！？； and newlines (the delimiter stays with its sentence);
    pieces longer than ``max_len`` are hard-wrapped. No cut is placed strictly
    inside a ``protected`` span.
    """
    n = len(text)
    if n == 0:
        return []
    blocked = np.zeros(n + 1, dtype=bool)
    for s, e in protected:
        blocked[max(s + 1, 0):min(e, n + 1)] = True

    cuts = [i + 1 for i, c in enumerate(text) if c in SENTENCE_DELIMITERS and i + 1 < n and not blocked[i + 1]]
    bounds = [0] + cuts + [n]
    spans = []
    for s, e in zip(bounds, bounds[1:]):
        while e - s > max_len:
            cut = s + max_len
            while cut > s and blocked[cut]:
                cut -= 1
            if cut == s:
                cut = s + max_len
                while cut < e and blocked[cut]:
                    cut += 1
                if cut >= e:
                    break
            spans.append((s, cut))
            s = cut
        spans.append((s, e))
    return spans
