"""Selection: validity filtering, majority vote and binary labels."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .rollout import PromptGroup


@dataclass
class GroupVerdict:
    majority_answer: Optional[str]
    counts: dict[str, int]
    labels: dict[str, int]
    invalid_ids: set[str]
    tie_broken: bool = False
    # rollout ids in group order; labels and invalid_ids partition this
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.ids:
            self.ids = (*self.labels, *sorted(self.invalid_ids))

    @property
    def majority_ids(self) -> list[str]:
        return [i for i in self.ids if self.labels.get(i) == 1]

    @property
    def minority_ids(self) -> list[str]:
        return [i for i in self.ids if self.labels.get(i) == -1]

    @property
    def valid_ids(self) -> list[str]:
        return [i for i in self.ids if i in self.labels]


def majority_vote(group: PromptGroup) -> GroupVerdict:
    """Vote over valid rollouts; ties go to the answer seen first."""
    valid = [r for r in group if r.answer is not None]
    invalid_ids = {r.id for r in group if r.answer is None}
    counts = Counter(r.answer for r in valid)
    if not counts:
        return GroupVerdict(None, {}, {}, invalid_ids, False, tuple(group.ids))
    top = max(counts.values())
    leaders = [a for a in counts if counts[a] == top]  # Counter keeps first-seen order
    majority = leaders[0]
    labels = {r.id: 1 if r.answer == majority else -1 for r in valid}
    return GroupVerdict(majority, dict(counts), labels, invalid_ids, len(leaders) > 1, tuple(group.ids))


def apply_vote_subsample(group: PromptGroup, n_vote: int, n_train: int,
                         rng: np.random.Generator) -> tuple[GroupVerdict, PromptGroup]:
    """Vote on the first ``n_vote`` rollouts, then keep a seeded ``n_train`` subset for training.

    The returned verdict keeps the full vote's counts but only labels the subset.
    """
    if n_train < 1:
        raise ValueError(f"n_train must be >= 1, got {n_train}")
    if n_train > n_vote:
        raise ValueError(f"n_train ({n_train}) exceeds n_vote ({n_vote})")
    if n_vote > len(group):
        raise ValueError(f"n_vote ({n_vote}) exceeds group size ({len(group)})")
    voters = group.subset(group.ids[:n_vote])
    verdict = majority_vote(voters)
    if n_train == n_vote:
        return verdict, voters
    picked = np.sort(rng.choice(n_vote, size=n_train, replace=False))
    keep = [voters.ids[i] for i in picked]
    subset = voters.subset(keep)
    keep_set = set(keep)
    sub_verdict = GroupVerdict(
        majority_answer=verdict.majority_answer,
        counts=verdict.counts,
        labels={k: v for k, v in verdict.labels.items() if k in keep_set},
        invalid_ids=verdict.invalid_ids & keep_set,
        tie_broken=verdict.tie_broken,
        ids=tuple(keep),
    )
    return sub_verdict, subset
