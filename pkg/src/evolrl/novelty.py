"""Variation: cosine similarity, raw novelty and per-group min-max normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .consensus import GroupVerdict
from .embeddings import EmbeddingTable

NORM_EPS = 1e-8
DEFAULT_ALPHA = 0.5


@dataclass
class NoveltyScores:
    mean_sim: dict[str, float]
    max_sim: dict[str, float]
    raw: dict[str, float]
    normalized: dict[str, float]
    alpha: float = DEFAULT_ALPHA


def similarity_matrix(table: EmbeddingTable, ids: Sequence[str]) -> np.ndarray:
    V = table.stack(list(ids))
    return V @ V.T


def novelty_raw(S: np.ndarray, ids: Sequence[str], majority_ids: Sequence[str],
                minority_ids: Sequence[str], alpha: float = DEFAULT_ALPHA):
    """Return ``(mean_sim, max_sim, raw)`` dicts keyed by scored id.

    Mean similarity is taken within a rollout's own label group, max similarity
    over every other scored rollout. Empty pools count as similarity 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    index = {k: n for n, k in enumerate(ids)}
    unknown = [k for k in (*majority_ids, *minority_ids) if k not in index]
    if unknown:
        raise KeyError(f"ids not in similarity matrix: {', '.join(unknown)}")
    if set(majority_ids) & set(minority_ids):
        raise ValueError("majority and minority ids overlap")

    order = [*majority_ids, *minority_ids]
    scored = np.array([index[k] for k in order], dtype=int)
    n = scored.size
    sub = S[np.ix_(scored, scored)] if n else np.zeros((0, 0))
    label = np.array([0] * len(majority_ids) + [1] * len(minority_ids))
    off = ~np.eye(n, dtype=bool)
    peer = off & (label[:, None] == label[None, :])
    peer_count = peer.sum(axis=1)
    s_bar = np.where(peer_count > 0, np.where(peer, sub, 0.0).sum(axis=1) / np.maximum(peer_count, 1), 0.0)
    m = np.where(off, sub, -np.inf).max(axis=1) if n > 1 else np.zeros(n)
    u = 1.0 - (alpha * s_bar + (1.0 - alpha) * m)
    mean_sim = dict(zip(order, s_bar.tolist()))
    max_sim = dict(zip(order, m.tolist()))
    raw = dict(zip(order, u.tolist()))
    return mean_sim, max_sim, raw


def normalize_intra_group(raw: dict[str, float], majority_ids: Sequence[str],
                          minority_ids: Sequence[str], eps: float = NORM_EPS) -> dict[str, float]:
    out: dict[str, float] = {}
    for members in (majority_ids, minority_ids):
        if not members:
            continue
        u = np.array([raw[k] for k in members])
        lo, hi = u.min(), u.max()
        scaled = (u - lo) / (hi - lo + eps)
        out.update(zip(members, (float(x) for x in scaled)))
    return out


def score_novelty(table: EmbeddingTable, verdict: GroupVerdict,
                  alpha: float = DEFAULT_ALPHA) -> NoveltyScores:
    """Full novelty pass for one prompt group; invalid rollouts are left out."""
    majority, minority = verdict.majority_ids, verdict.minority_ids
    ids = [*majority, *minority]
    S = similarity_matrix(table, ids)
    mean_sim, max_sim, raw = novelty_raw(S, ids, majority, minority, alpha)
    normalized = normalize_intra_group(raw, majority, minority)
    return NoveltyScores(mean_sim, max_sim, raw, normalized, alpha)
