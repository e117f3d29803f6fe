"""Toy reasoning-population environment and the label-free training loop.

The policy is a table of logits with ``1 + K`` rows. Row 0 picks one of ``K``
reasoning modes; a mode with ``token_length`` L then emits ``L - 1`` filler
tokens from row ``1 + mode``. Each mode has a reasoning prototype embedding
and a fixed chance of producing the correct answer. Ground truth is used for
metrics only; rewards come from the majority vote and novelty.

Randomness comes from Philox streams keyed by ``(seed, stream, step)``, so a
run is reproducible from its seed alone and both reward schemes see the same
random draws at a given step.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np

from .consensus import apply_vote_subsample
from .embeddings import EmbeddingTable, l2_normalize
from .novelty import DEFAULT_ALPHA, score_novelty
from .optimizer import OptimConfig, ToyPolicy, TrajectoryBatch, categorical_entropy, step
from .reward import Scheme, evol_reward, majority_only_reward
from .rollout import PromptGroup, Rollout

STREAM_SAMPLE = 1
STREAM_SUBSET = 2
STREAM_EVAL = 3
SEED_MASK = (1 << 64) - 1


class ScenarioError(ValueError):
    pass


def make_rng(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    """Philox generator for one named stream at one training step."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & SEED_MASK, stream, step])))


@dataclass
class ModeSpec:
    mode_id: int
    prototype: np.ndarray
    accuracy: float
    answer_alphabet: tuple[str, ...]
    noise_sigma: float = 0.0
    token_length: int = 1

    def __post_init__(self):
        self.prototype = l2_normalize(self.prototype)
        self.answer_alphabet = tuple(self.answer_alphabet)
        if not 0.0 <= self.accuracy <= 1.0:
            raise ScenarioError(f"mode {self.mode_id}: accuracy must lie in [0, 1]")
        if not self.answer_alphabet:
            raise ScenarioError(f"mode {self.mode_id}: answer_alphabet is empty")
        if self.noise_sigma < 0:
            raise ScenarioError(f"mode {self.mode_id}: noise_sigma must be >= 0")
        if self.token_length < 1:
            raise ScenarioError(f"mode {self.mode_id}: token_length must be >= 1")

    @property
    def correct_answer(self) -> str:
        return self.answer_alphabet[0]


@dataclass
class EnvConfig:
    modes: list[ModeSpec]
    G: int = 32
    n_vote: int = 64
    steps: int = 500
    seed: int = 0
    scheme: Scheme = Scheme.EVOL_RL
    alpha: float = DEFAULT_ALPHA
    optim: OptimConfig = field(default_factory=OptimConfig)
    initial_mode_logits: Optional[np.ndarray] = None
    eval_n: int = 16
    eval_trials: int = 10_000
    # Monte-Carlo trials for intermediate rows; the final row always uses eval_trials
    trace_eval_trials: Optional[int] = None
    name: str = "custom"

    def __post_init__(self):
        K = len(self.modes)
        if K < 2:
            raise ScenarioError("need at least two modes")
        if [m.mode_id for m in self.modes] != list(range(K)):
            raise ScenarioError("mode ids must be 0..K-1 in order")
        dims = {m.prototype.shape for m in self.modes}
        if len(dims) != 1:
            raise ScenarioError("mode prototypes differ in dimension")
        if len({m.correct_answer for m in self.modes}) != 1:
            raise ScenarioError("all modes must share the same correct answer (first alphabet entry)")
        if not any("0" <= ch <= "9" for ch in self.modes[0].correct_answer):
            raise ScenarioError("the correct answer must contain a digit")
        if self.G < 1 or self.n_vote < 1:
            raise ScenarioError("G and n_vote must be positive")
        if self.steps < 0:
            raise ScenarioError("steps must be >= 0")
        if self.trace_eval_trials is None:
            self.trace_eval_trials = self.eval_trials
        if self.eval_n < 1 or self.eval_trials < 1 or self.trace_eval_trials < 1:
            raise ScenarioError("eval_n and eval_trials must be positive")
        self.scheme = Scheme.parse(self.scheme)
        if self.initial_mode_logits is None:
            self.initial_mode_logits = np.zeros(K)
        self.initial_mode_logits = np.asarray(self.initial_mode_logits, dtype=np.float64)
        if self.initial_mode_logits.shape != (K,):
            raise ScenarioError(f"initial_mode_logits must have length {K}")

    @property
    def K(self) -> int:
        return len(self.modes)

    @property
    def n_sampled(self) -> int:
        # vote over max(G, n_vote) rollouts, train on G of them
        return max(self.G, self.n_vote)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        raw_modes = data.pop("modes", None)
        if not raw_modes:
            raise ScenarioError("scenario has no modes")
        dim = int(data.pop("dim", max(len(raw_modes), 8)))
        modes = []
        for i, m in enumerate(raw_modes):
            m = dict(m)
            m.setdefault("mode_id", i)
            proto = m.pop("prototype", None)
            if proto is None:
                if m["mode_id"] >= dim:
                    raise ScenarioError("dim must be >= K when prototypes are omitted")
                proto = np.eye(dim)[m["mode_id"]]
            try:
                modes.append(ModeSpec(prototype=np.asarray(proto, dtype=np.float64), **m))
            except TypeError as exc:
                raise ScenarioError(f"mode {i}: {exc}") from exc
        optim_keys = {f.name for f in fields(OptimConfig)}
        optim = OptimConfig(**{k: data.pop(k) for k in list(data) if k in optim_keys},
                            **data.pop("optim", {}))
        known = {f.name for f in fields(cls)} - {"modes", "optim"}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(modes=modes, optim=optim, **data)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "G": self.G,
            "n_vote": self.n_vote,
            "steps": self.steps,
            "seed": self.seed,
            "scheme": self.scheme.value,
            "alpha": self.alpha,
            "eval_n": self.eval_n,
            "eval_trials": self.eval_trials,
            "trace_eval_trials": self.trace_eval_trials,
            "initial_mode_logits": [float(x) for x in self.initial_mode_logits],
            "optim": asdict(self.optim),
            "modes": [
                {
                    "mode_id": m.mode_id,
                    "prototype": [float(x) for x in m.prototype],
                    "accuracy": m.accuracy,
                    "answer_alphabet": list(m.answer_alphabet),
                    "noise_sigma": m.noise_sigma,
                    "token_length": m.token_length,
                }
                for m in self.modes
            ],
        }
        return out


def load_scenario(path) -> EnvConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc.msg})") from exc
    return EnvConfig.from_dict(data)


def majority_trap(**overrides) -> EnvConfig:
    """The shipped default scenario, optionally with top-level overrides."""
    text = resources.files("evolrl").joinpath("scenarios/majority_trap.json").read_text(encoding="utf-8")
    data = json.loads(text)
    data.update(overrides)
    return EnvConfig.from_dict(data)


def initial_policy(env: EnvConfig) -> ToyPolicy:
    K = env.K
    logits = np.zeros((1 + K, K))
    logits[0] = env.initial_mode_logits
    return ToyPolicy(logits)


def policy_entropy(policy: ToyPolicy) -> float:
    """Entropy (nats) of the mode-choice distribution."""
    return float(categorical_entropy(policy.log_probs()[0]))


def mode_probs(policy: ToyPolicy) -> np.ndarray:
    return policy.probs()[0]


def _sample_categorical(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


@dataclass
class SampledGroup:
    group: PromptGroup
    modes: np.ndarray
    correct: np.ndarray
    rows: list[np.ndarray]
    choices: list[np.ndarray]
    logprobs: list[np.ndarray]
    embeddings: np.ndarray

    def index_of(self) -> dict[str, int]:
        return {r.id: n for n, r in enumerate(self.group)}


def sample_rollouts(policy: ToyPolicy, env: EnvConfig, rng: np.random.Generator,
                    n: Optional[int] = None, prompt_id: str = "p0") -> SampledGroup:
    """Draw ``n`` (default ``env.G``) rollouts.

    Random draws happen in a fixed order and amount per call, whatever the
    outcomes, so streams stay aligned across reward schemes.
    """
    n = env.G if n is None else n
    K = env.K
    logp = policy.log_probs()
    cdfs = np.cumsum(np.exp(logp), axis=1)
    lengths = np.array([m.token_length for m in env.modes])
    acc = np.array([m.accuracy for m in env.modes])
    sigma = np.array([m.noise_sigma for m in env.modes])
    protos = np.stack([m.prototype for m in env.modes])
    max_len = int(lengths.max())

    u_mode = rng.random(n)
    u_tok = rng.random((n, max_len - 1))
    noise = rng.standard_normal((n, protos.shape[1]))
    u_correct = rng.random(n)
    u_wrong = rng.random(n)

    modes = _sample_categorical(cdfs[0], u_mode)
    raw = protos[modes] + sigma[modes, None] * noise
    embeddings = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    correct = u_correct < acc[modes]

    rollouts, rows, choices, logprobs = [], [], [], []
    for i, m in enumerate(modes.tolist()):
        L = int(lengths[m])
        tokens = _sample_categorical(cdfs[1 + m], u_tok[i, : L - 1]) if L > 1 else np.zeros(0, dtype=int)
        r = np.array([0] + [1 + m] * (L - 1), dtype=np.intp)
        c = np.concatenate([[m], tokens]).astype(np.intp)
        rows.append(r)
        choices.append(c)
        logprobs.append(logp[r, c])
        alphabet = env.modes[m].answer_alphabet
        if correct[i] or len(alphabet) == 1:
            answer = alphabet[0]
        else:
            answer = alphabet[1 + min(int(u_wrong[i] * (len(alphabet) - 1)), len(alphabet) - 2)]
        reasoning = f"mode {m}: " + " ".join(f"t{t}" for t in tokens.tolist()) + " "
        # built directly: the text is well formed by construction and the embedding already unit norm
        rollouts.append(Rollout(
            id=f"r{i:03d}",
            prompt_id=prompt_id,
            text=reasoning + f"\\boxed{{{answer}}}",
            reasoning=reasoning,
            answer=answer if any("0" <= ch <= "9" for ch in answer) else None,
            embedding=embeddings[i],
            token_logprobs_old=tuple(logprobs[-1].tolist()),
            length=L,
        ))
    correct = np.array([r.answer == env.modes[0].correct_answer for r in rollouts], dtype=bool)
    return SampledGroup(PromptGroup(prompt_id, rollouts), modes, correct, rows, choices, logprobs, embeddings)


def empirical_mode_histogram(modes: Sequence[int], K: int) -> np.ndarray:
    counts = np.bincount(np.asarray(modes, dtype=int), minlength=K).astype(float)
    return counts / max(counts.sum(), 1.0)


def _answer_table(env: EnvConfig):
    # global answer ids: 0 is the shared correct answer; -1 marks answers without a digit
    vocab: dict[str, int] = {env.modes[0].correct_answer: 0}
    tables = []
    for m in env.modes:
        ids = []
        for a in m.answer_alphabet:
            if not any(ch.isdigit() and ch.isascii() for ch in a):
                ids.append(-1)
            else:
                ids.append(vocab.setdefault(a, len(vocab)))
        tables.append(ids)
    return tables, len(vocab)


def eval_pass_at_n(policy: ToyPolicy, env: EnvConfig, n: int, trials: int,
                   rng: np.random.Generator) -> tuple[float, float, float]:
    """Monte-Carlo ``(pass1, pass_n, maj_n)`` over ``trials`` sets of ``n`` samples.

    Majority ties go to the answer sampled first, as in the training vote.
    """
    K = env.K
    cdf = np.cumsum(mode_probs(policy))
    acc = np.array([m.accuracy for m in env.modes])
    tables, n_answers = _answer_table(env)
    width = max(len(t) for t in tables)
    lookup = np.full((K, width), -1, dtype=int)
    for k, t in enumerate(tables):
        lookup[k, : len(t)] = t
    n_alpha = np.array([len(t) for t in tables])

    modes = _sample_categorical(cdf, rng.random((trials, n)))
    hit = rng.random((trials, n)) < acc[modes]
    n_wrong = np.maximum(n_alpha[modes] - 1, 1)
    wrong_slot = 1 + np.minimum((rng.random((trials, n)) * n_wrong).astype(int), n_wrong - 1)
    wrong_slot = np.where(n_alpha[modes] > 1, wrong_slot, 0)
    answers = np.where(hit, lookup[modes, 0], lookup[modes, wrong_slot])
    correct = answers == 0

    pass1 = float(correct.mean())
    pass_n = float(correct.any(axis=1).mean())

    # per-trial answer counts and first positions; column n_answers collects invalid answers
    col = np.where(answers >= 0, answers, n_answers)
    rows = np.arange(trials)
    counts = np.bincount((rows[:, None] * (n_answers + 1) + col).ravel(),
                         minlength=trials * (n_answers + 1)).reshape(trials, n_answers + 1)[:, :n_answers]
    first = np.full((trials, n_answers + 1), n)
    for j in range(n - 1, -1, -1):
        first[rows, col[:, j]] = j
    score = counts * (n + 1) - first[:, :n_answers]
    winner = score.argmax(axis=1)
    has_vote = counts.max(axis=1) > 0
    maj_n = float((has_vote & (winner == 0)).mean())
    return pass1, pass_n, maj_n


@dataclass
class MetricsRecord:
    step: int
    entropy_nats: float
    pass1: float
    pass_n: float
    maj_n: float
    mean_length: float
    mean_pairwise_sim: float
    mode_histogram: tuple[float, ...] = ()


def expected_pass1(policy: ToyPolicy, env: EnvConfig) -> float:
    acc = np.array([m.accuracy for m in env.modes])
    return float(mode_probs(policy) @ acc)


def mean_pairwise_similarity(embeddings: np.ndarray) -> float:
    n = embeddings.shape[0]
    if n < 2:
        return 1.0
    S = embeddings @ embeddings.T
    return float((S.sum() - np.trace(S)) / (n * (n - 1)))


def training_step(policy: ToyPolicy, env: EnvConfig, step_no: int):
    """Sample, vote, score, reward and update once. Returns (new_policy, sampled, train_ids, rewards)."""
    sampled = sample_rollouts(policy, env, make_rng(env.seed, STREAM_SAMPLE, step_no), n=env.n_sampled)
    verdict, train = apply_vote_subsample(sampled.group, env.n_sampled, env.G,
                                          make_rng(env.seed, STREAM_SUBSET, step_no))
    index = sampled.index_of()
    picked = [index[i] for i in train.ids]
    if env.scheme is Scheme.EVOL_RL:
        table = EmbeddingTable(sampled.embeddings.shape[1],
                               {rid: sampled.embeddings[index[rid]] for rid in train.ids})
        rewards = evol_reward(verdict, score_novelty(table, verdict, env.alpha))
    else:
        rewards = majority_only_reward(verdict)
    r = np.array(rewards.values(train.ids))
    batch = TrajectoryBatch.single_group(
        [sampled.rows[i] for i in picked],
        [sampled.choices[i] for i in picked],
        [sampled.logprobs[i] for i in picked],
        r,
        zscore_eps=env.optim.zscore_eps,
    )
    return step(policy, batch, env.optim), sampled, picked, r


def run_training(env: EnvConfig, progress: Optional[Callable[[MetricsRecord], None]] = None,
                 policy: Optional[ToyPolicy] = None) -> list[MetricsRecord]:
    """Train for ``env.steps`` updates; one metrics row per update, measured after it."""
    policy = initial_policy(env) if policy is None else policy
    records: list[MetricsRecord] = []
    lengths = np.array([m.token_length for m in env.modes])
    for s in range(1, env.steps + 1):
        policy, sampled, picked, _ = training_step(policy, env, s)
        trials = env.eval_trials if s == env.steps else env.trace_eval_trials
        _, pass_n, maj_n = eval_pass_at_n(policy, env, env.eval_n, trials, make_rng(env.seed, STREAM_EVAL, s))
        rec = MetricsRecord(
            step=s,
            entropy_nats=policy_entropy(policy),
            pass1=expected_pass1(policy, env),
            pass_n=pass_n,
            maj_n=maj_n,
            mean_length=float(lengths[sampled.modes[picked]].mean()),
            mean_pairwise_sim=mean_pairwise_similarity(sampled.embeddings[picked]),
            mode_histogram=tuple(float(x) for x in mode_probs(policy)),
        )
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


def is_collapsed(histogram: Sequence[float], threshold: float = 0.95) -> bool:
    return bool(histogram) and max(histogram) >= threshold


def max_entropy(K: int) -> float:
    return math.log(K)
