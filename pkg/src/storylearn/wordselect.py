"""Rank vocabulary words by semantic relevance to a title via pluggable embeddings."""

from __future__ import annotations

import hashlib
import logging
import math
from typing import IO, Protocol, Sequence

from .lexicon import VocabPool
from .text import tokenize

log = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    """Bad vectors: mismatched dimensions or a zero vector."""


class EmbeddingProvider(Protocol):
    """Deterministic text -> vector encoder; all outputs share ``dimension``."""

    dimension: int

    def embed(self, text: str) -> Sequence[float]: ...


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """dot(u,v) / (|u|*|v|); rejects mismatched dimensions and zero vectors."""
    if len(u) != len(v):
        raise EmbeddingError(f"dimension mismatch: {len(u)} vs {len(v)}")
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("cosine of a zero vector is undefined")
    return dot / (nu * nv)


def rank_by_title(
    title: str,
    pool: VocabPool,
    k: int,
    provider: EmbeddingProvider,
) -> list[str]:
    """Top-k headwords by cosine similarity to the title embedding.

    Descending score, ties broken lexicographically. Words the provider
    cannot embed (KeyError) are skipped with a warning; other provider
    failures propagate with the word attached.
    """
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    title_vec = provider.embed(title)
    scored = []
    for word in pool.words:
        try:
            vec = provider.embed(word)
        except KeyError:
            log.warning("no embedding for %r; excluded from ranking", word)
            continue
        except Exception as exc:
            raise RuntimeError(f"embedding provider failed on {word!r}: {exc}") from exc
        scored.append((-cosine(title_vec, vec), word))
    scored.sort()
    return [word for _, word in scored[:k]]


class FileEmbeddingProvider:
    """Precomputed vectors from a file: header ``dim=<d>``, then
    ``word<TAB>v1 v2 ... vd`` per line.

    Unknown single words raise KeyError; multi-word text falls back to the
    mean of its known token vectors so titles need no dedicated entry.
    """

    def __init__(self, table: dict[str, list[float]], dimension: int):
        self.dimension = dimension
        self._table = table

    @classmethod
    def load(cls, source: IO[str]) -> "FileEmbeddingProvider":
        header = source.readline().strip()
        if not header.startswith("dim="):
            raise EmbeddingError(f"bad embedding file header: {header!r}")
        dimension = int(header[4:])
        if dimension < 1:
            raise EmbeddingError(f"bad embedding dimension: {dimension}")
        table: dict[str, list[float]] = {}
        for lineno, line in enumerate(source, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            word, _, values = line.partition("\t")
            vec = [float(x) for x in values.split()]
            if len(vec) != dimension:
                raise EmbeddingError(
                    f"line {lineno}: vector has {len(vec)} values, want {dimension}"
                )
            table[word.lower()] = vec
        return cls(table, dimension)

    def embed(self, text: str) -> list[float]:
        key = text.strip().lower()
        vec = self._table.get(key)
        if vec is not None:
            return vec
        known = [self._table[t.lower()] for t in tokenize(text) if t.lower() in self._table]
        if not known:
            raise KeyError(text)
        return [sum(col) / len(known) for col in zip(*known)]


class HashingEmbeddingProvider:
    """Deterministic test/fallback provider: character trigrams hashed into
    a fixed-width count vector. Stable across processes (md5, not hash())."""

    def __init__(self, dimension: int = 64):
        if dimension < 1:
            raise EmbeddingError(f"bad embedding dimension: {dimension}")
        self.dimension = dimension

    def embed(self, text: str) -> list[float]:
        padded = f"^{text.strip().lower()}$"
        vec = [0.0] * self.dimension
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            digest = hashlib.md5(trigram.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "big") % self.dimension] += 1.0
        return vec
