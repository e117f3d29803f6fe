"""Group-relative advantages, clipped surrogate, entropy and KL terms for tabular softmax policies.

Every loss has a matching analytic gradient with respect to the policy
logits; ``finite_difference_gradient`` is kept as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ZSCORE_EPS = 1e-8


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def categorical_entropy(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -(p * logp).sum(axis=-1)


@dataclass
class ToyPolicy:
    """Per-state logits ``[T_states x K]`` plus a frozen reference copy."""

    logits: np.ndarray
    reference_logits: Optional[np.ndarray] = None

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a 2-D array")
        if self.reference_logits is None:
            self.reference_logits = self.logits.copy()
        else:
            self.reference_logits = np.array(self.reference_logits, dtype=np.float64)
        if self.reference_logits.shape != self.logits.shape:
            raise ValueError("reference_logits shape differs from logits")
        if not (np.all(np.isfinite(self.logits)) and np.all(np.isfinite(self.reference_logits))):
            raise ValueError("policy logits must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def with_logits(self, logits: np.ndarray) -> "ToyPolicy":
        return ToyPolicy(logits, self.reference_logits)


@dataclass
class OptimConfig:
    eps_low: float = 0.2
    eps_high: float = 0.28
    lambda_ent: float = 0.003
    kl_coeff: float = 0.001
    learning_rate: float = 0.05
    zscore_eps: float = ZSCORE_EPS

    def __post_init__(self):
        if not self.eps_high >= self.eps_low > 0:
            raise ValueError(f"need eps_high >= eps_low > 0, got {self.eps_low}, {self.eps_high}")
        for name in ("lambda_ent", "kl_coeff", "learning_rate", "zscore_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def group_advantages(rewards: Sequence[float], zscore_eps: float = ZSCORE_EPS) -> np.ndarray:
    """Z-score rewards within one group (population std); flat groups get zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("cannot compute advantages for an empty group")
    # compare values, not std: the float mean of equal values can be off by an ulp
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + zscore_eps)


@dataclass
class TrajectoryBatch:
    """Sampled trajectories: for rollout i, token t was ``choices[i][t]`` drawn in state ``rows[i][t]``."""

    rows: list[np.ndarray]
    choices: list[np.ndarray]
    logprobs_old: list[np.ndarray]
    rewards: np.ndarray
    groups: np.ndarray
    advantages: np.ndarray = field(default=None)
    zscore_eps: float = ZSCORE_EPS

    def __post_init__(self):
        n = len(self.rows)
        if n == 0:
            raise ValueError("empty trajectory batch")
        self.rows = [np.asarray(x, dtype=np.intp) for x in self.rows]
        self.choices = [np.asarray(x, dtype=np.intp) for x in self.choices]
        self.logprobs_old = [np.asarray(x, dtype=np.float64) for x in self.logprobs_old]
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.groups = np.asarray(self.groups, dtype=np.intp)
        if not (len(self.choices) == len(self.logprobs_old) == self.rewards.size == self.groups.size == n):
            raise ValueError("per-rollout fields disagree in length")
        for i, (r, c, lp) in enumerate(zip(self.rows, self.choices, self.logprobs_old)):
            if not (r.size == c.size == lp.size) or c.size == 0:
                raise ValueError(f"rollout {i}: rows/choices/logprobs_old lengths differ or are empty")
            if np.any(lp > 0):
                raise ValueError(f"rollout {i}: logprobs_old must be <= 0")
        if self.advantages is None:
            adv = np.zeros(n)
            for g in np.unique(self.groups):
                members = np.flatnonzero(self.groups == g)
                adv[members] = group_advantages(self.rewards[members], self.zscore_eps)
            self.advantages = adv
        else:
            self.advantages = np.asarray(self.advantages, dtype=np.float64)
        self.lengths = np.array([c.size for c in self.choices])
        # flattened token view, rollout-major order
        self.tok_rollout = np.repeat(np.arange(n), self.lengths)
        self.tok_row = np.concatenate(self.rows)
        self.tok_choice = np.concatenate(self.choices)
        self.tok_logp_old = np.concatenate(self.logprobs_old)
        self.tok_weight = 1.0 / (n * self.lengths[self.tok_rollout])

    @property
    def size(self) -> int:
        return len(self.rows)

    @classmethod
    def single_group(cls, rows, choices, logprobs_old, rewards, **kw) -> "TrajectoryBatch":
        return cls(rows, choices, logprobs_old, rewards, np.zeros(len(rows), dtype=np.intp), **kw)


def _scatter_logprob_grad(policy_probs: np.ndarray, batch: TrajectoryBatch, g_tok: np.ndarray) -> np.ndarray:
    # d logp[row, choice] / d logits[row, :] = onehot(choice) - probs[row]
    grad = np.zeros_like(policy_probs)
    np.add.at(grad, (batch.tok_row, batch.tok_choice), g_tok)
    row_mass = np.bincount(batch.tok_row, weights=g_tok, minlength=grad.shape[0])
    grad -= row_mass[:, None] * policy_probs
    return grad


def _surrogate(policy: ToyPolicy, batch: TrajectoryBatch, eps_low: float, eps_high: float,
               need_grad: bool):
    logp = policy.log_probs()
    ratio = np.exp(logp[batch.tok_row, batch.tok_choice] - batch.tok_logp_old)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite importance ratio")
    adv = batch.advantages[batch.tok_rollout]
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps_low, 1.0 + eps_high) * adv
    loss = -float(np.sum(batch.tok_weight * np.minimum(unclipped, clipped)))
    if not need_grad:
        return loss, None
    in_window = (ratio >= 1.0 - eps_low) & (ratio <= 1.0 + eps_high)
    live = in_window | (unclipped < clipped)
    g_tok = -batch.tok_weight * np.where(live, unclipped, 0.0)
    return loss, _scatter_logprob_grad(np.exp(logp), batch, g_tok)


def clipped_surrogate(policy: ToyPolicy, batch: TrajectoryBatch, eps_low: float = 0.2,
                      eps_high: float = 0.28) -> float:
    """Negated clipped objective, token-averaged per rollout then averaged over rollouts."""
    return _surrogate(policy, batch, eps_low, eps_high, need_grad=False)[0]


def _row_weights(batch: TrajectoryBatch, n_rows: int) -> np.ndarray:
    return np.bincount(batch.tok_row, weights=batch.tok_weight, minlength=n_rows)


def _entropy(policy: ToyPolicy, batch: TrajectoryBatch, lambda_ent: float, need_grad: bool):
    logp = policy.log_probs()
    H = categorical_entropy(logp)
    w = _row_weights(batch, logp.shape[0])
    loss = -lambda_ent * float(np.sum(w * H))
    if not need_grad:
        return loss, None
    p = np.exp(logp)
    dH = -p * (logp + H[:, None])
    return loss, -lambda_ent * w[:, None] * dH


def entropy_loss(policy: ToyPolicy, batch: TrajectoryBatch, lambda_ent: float = 0.003) -> float:
    return _entropy(policy, batch, lambda_ent, need_grad=False)[0]


def _kl(policy: ToyPolicy, kl_coeff: float, need_grad: bool):
    logp = policy.log_probs()
    logq = log_softmax(policy.reference_logits)
    p = np.exp(logp)
    kl_rows = (p * (logp - logq)).sum(axis=1)
    T = logp.shape[0]
    loss = kl_coeff * float(kl_rows.mean())
    if not need_grad:
        return loss, None
    return loss, (kl_coeff / T) * p * (logp - logq - kl_rows[:, None])


def kl_loss(policy: ToyPolicy, kl_coeff: float = 0.001) -> float:
    return _kl(policy, kl_coeff, need_grad=False)[0]


def total_loss(policy: ToyPolicy, batch: TrajectoryBatch, config: OptimConfig) -> float:
    return (clipped_surrogate(policy, batch, config.eps_low, config.eps_high)
            + entropy_loss(policy, batch, config.lambda_ent)
            + kl_loss(policy, config.kl_coeff))


def loss_and_grad(policy: ToyPolicy, batch: TrajectoryBatch, config: OptimConfig) -> tuple[float, np.ndarray]:
    l_pg, g_pg = _surrogate(policy, batch, config.eps_low, config.eps_high, need_grad=True)
    l_ent, g_ent = _entropy(policy, batch, config.lambda_ent, need_grad=True)
    l_kl, g_kl = _kl(policy, config.kl_coeff, need_grad=True)
    return l_pg + l_ent + l_kl, g_pg + g_ent + g_kl


def step(policy: ToyPolicy, batch: TrajectoryBatch, config: OptimConfig) -> ToyPolicy:
    """One plain gradient-descent update; the reference logits stay frozen."""
    _, grad = loss_and_grad(policy, batch, config)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    return policy.with_logits(policy.logits - config.learning_rate * grad)


def finite_difference_gradient(loss_fn: Callable[[ToyPolicy], float], policy: ToyPolicy,
                               h: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(policy.logits)
    for idx in np.ndindex(*policy.logits.shape):
        plus = policy.logits.copy()
        minus = policy.logits.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (loss_fn(policy.with_logits(plus)) - loss_fn(policy.with_logits(minus))) / (2 * h)
    return grad


def distance_to_clip_kink(policy: ToyPolicy, batch: TrajectoryBatch, eps_low: float, eps_high: float) -> float:
    """Smallest |ratio - (1 - eps_low)| or |ratio - (1 + eps_high)| over tokens."""
    ratio = np.exp(policy.log_probs()[batch.tok_row, batch.tok_choice] - batch.tok_logp_old)
    return float(np.min(np.minimum(np.abs(ratio - (1 - eps_low)), np.abs(ratio - (1 + eps_high)))))

