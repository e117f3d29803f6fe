"""Reward mapping for the novelty-banded scheme and the majority-only baseline."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .consensus import GroupVerdict
from .novelty import NoveltyScores

INVALID_REWARD = -1.0


class Scheme(str, enum.Enum):
    EVOL_RL = "evolrl"
    MAJORITY_ONLY = "majority-only"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        aliases = {"evolrl": cls.EVOL_RL, "evol-rl": cls.EVOL_RL,
                   "majority-only": cls.MAJORITY_ONLY, "majority": cls.MAJORITY_ONLY,
                   "majority_only": cls.MAJORITY_ONLY, "ttrl": cls.MAJORITY_ONLY}
        try:
            return aliases[value.lower()]
        except KeyError:
            raise ValueError(f"unknown reward scheme {value!r}") from None


@dataclass
class RewardVector:
    rewards: dict[str, float]
    scheme: Scheme

    def values(self, ids) -> list[float]:
        return [self.rewards[i] for i in ids]


def evol_reward(verdict: GroupVerdict, novelty: NoveltyScores) -> RewardVector:
    """Majority rollouts land in [0.5, 1], minority in [-1, -0.5], invalid at -1."""
    valid = set(verdict.labels)
    scored = set(novelty.normalized)
    if valid != scored:
        extra, missing = sorted(scored - valid), sorted(valid - scored)
        raise ValueError(f"novelty ids do not match valid rollouts (missing={missing}, extra={extra})")
    rewards = {}
    for i in verdict.ids:
        if i in verdict.invalid_ids:
            rewards[i] = INVALID_REWARD
        elif verdict.labels[i] == 1:
            rewards[i] = 0.5 + 0.5 * novelty.normalized[i]
        else:
            rewards[i] = -1.0 + 0.5 * novelty.normalized[i]
    return RewardVector(rewards, Scheme.EVOL_RL)


def majority_only_reward(verdict: GroupVerdict) -> RewardVector:
    rewards = {i: float(verdict.labels[i]) if i in verdict.labels else INVALID_REWARD
               for i in verdict.ids}
    return RewardVector(rewards, Scheme.MAJORITY_ONLY)
