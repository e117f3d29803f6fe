"""Unit-norm reasoning embeddings: file-backed tables and a lexical hashing embedder.

The lexical embedder hashes character 3-grams with 64-bit FNV-1a (seeded by
folding the seed's 8 little-endian bytes in before the gram) into ``dim``
buckets. Bucket is ``h % dim``; the sign is ``+1`` when bit 63 of ``h`` is
clear, else ``-1``. Texts shorter than 3 characters hash as a single gram.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF
NGRAM = 3


class EmbeddingError(ValueError):
    pass


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise EmbeddingError("cannot normalize a non-finite vector")
    norm = float(np.linalg.norm(v))
    if (norm == 0.0 or not np.isfinite(norm)) and np.any(v):
        # under/overflow in the norm; rescale first
        v = v / np.abs(v).max()
        norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero or non-finite vector")
    return v / norm


def fnv1a64(data: bytes, seed: int = 0) -> int:
    h = FNV64_OFFSET
    for b in (seed & MASK64).to_bytes(8, "little") + data:
        h ^= b
        h = (h * FNV64_PRIME) & MASK64
    return h


def char_ngrams(text: str, n: int = NGRAM) -> list[str]:
    if len(text) < n:
        return [text] if text else []
    return [text[i:i + n] for i in range(len(text) - n + 1)]


def lexical_embed(reasoning: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    if dim < 8:
        raise EmbeddingError(f"lexical embedding dim must be >= 8, got {dim}")
    v = np.zeros(dim, dtype=np.float64)
    grams = char_ngrams(reasoning)
    if not grams:
        v[0] = 1.0
        return v
    for gram in grams:
        h = fnv1a64(gram.encode("utf-8"), seed)
        v[h % dim] += -1.0 if h >> 63 else 1.0
    if not v.any():
        # every bucket cancelled; fall back like the empty text
        v[0] = 1.0
        return v
    return l2_normalize(v)


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        for key, v in self.vectors.items():
            if v.shape != (self.dim,):
                raise EmbeddingError(f"vector for {key!r} has shape {v.shape}, expected ({self.dim},)")

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def __getitem__(self, key: str) -> np.ndarray:
        return self.vectors[key]

    def __len__(self) -> int:
        return len(self.vectors)

    def stack(self, ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self.vectors]
        if missing:
            raise EmbeddingError(f"no embedding for ids: {', '.join(missing)}")
        if not ids:
            return np.zeros((0, self.dim))
        return np.stack([self.vectors[i] for i in ids])

    @classmethod
    def from_mapping(cls, vectors: Mapping[str, Sequence[float]]) -> "EmbeddingTable":
        normed = {k: l2_normalize(v) for k, v in vectors.items()}
        dims = {v.shape[0] for v in normed.values()}
        if len(dims) > 1:
            raise EmbeddingError(f"mixed embedding dimensions: {sorted(dims)}")
        return cls(dims.pop() if dims else 0, normed)


def load_embedding_table(lines: Iterable[str], expected_ids: Iterable[str]) -> EmbeddingTable:
    """Read ``{"id": ..., "vector": [...]}`` lines; every expected id must be present."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            key, vec = obj["id"], np.asarray(obj["vector"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"line {lineno}: malformed embedding record ({exc})") from exc
        if vec.ndim != 1:
            raise EmbeddingError(f"line {lineno}: vector must be one-dimensional")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise EmbeddingError(f"line {lineno}: dimension mismatch ({vec.shape[0]} vs {dim})")
        try:
            vectors[str(key)] = l2_normalize(vec)
        except EmbeddingError as exc:
            raise EmbeddingError(f"line {lineno}: {exc}") from exc
    missing = [i for i in expected_ids if i not in vectors]
    if missing:
        raise EmbeddingError(f"missing embeddings for ids: {', '.join(missing)}")
    return EmbeddingTable(dim or 0, vectors)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(l2_normalize(a), l2_normalize(b)))
