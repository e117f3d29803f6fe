"""Shared builders for tests."""

import math

import numpy as np

from evolrl.rollout import PromptGroup, Rollout

SQRT_HALF = math.sqrt(2) / 2


def make_group(answers, embeddings=None, prompt_id="p"):
    """Build a prompt group whose rollout i answers ``answers[i]`` (None -> no box)."""
    rollouts = []
    for i, a in enumerate(answers):
        text = f"reasoning {i} " + (f"\\boxed{{{a}}}" if a is not None else "no final answer")
        emb = None if embeddings is None else embeddings[i]
        rollouts.append(Rollout.from_text(f"r{i}", prompt_id, text, embedding=emb))
    return PromptGroup(prompt_id, rollouts)




def concentrated_policy(K=8, mode=0, mass=0.95):
    """Mode row puts ``mass`` on ``mode`` and spreads the rest evenly."""
    from evolrl.optimizer import ToyPolicy

    probs = np.full(K, (1 - mass) / (K - 1))
    probs[mode] = mass
    logits = np.zeros((1 + K, K))
    logits[0] = np.log(probs)
    return ToyPolicy(logits)


def mutant_update(scheme, mutant_answer="42", G=32, mutant_mode=3, seed=0):
    """One update on 31 near-duplicate mode-0 rollouts plus one distinct rollout.

    Returns (logit before, logit after) for the mutant's mode.
    """
    from evolrl.consensus import majority_vote
    from evolrl.embeddings import EmbeddingTable
    from evolrl.novelty import score_novelty
    from evolrl.optimizer import OptimConfig, TrajectoryBatch, step
    from evolrl.reward import Scheme, evol_reward, majority_only_reward

    rng = np.random.default_rng(seed)
    policy = concentrated_policy()
    K = policy.logits.shape[1]
    base = np.eye(K)[0]
    vecs = [base + 0.01 * rng.standard_normal(K) for _ in range(G - 1)] + [np.eye(K)[mutant_mode]]
    modes = [0] * (G - 1) + [mutant_mode]
    answers = ["42"] * (G - 1) + [mutant_answer]
    group = make_group(answers, vecs)
    verdict = majority_vote(group)
    if scheme is Scheme.EVOL_RL:
        table = EmbeddingTable.from_mapping({r.id: r.embedding for r in group})
        rewards = evol_reward(verdict, score_novelty(table, verdict))
    else:
        rewards = majority_only_reward(verdict)
    logp = policy.log_probs()
    batch = TrajectoryBatch.single_group(
        rows=[[0]] * G, choices=[[m] for m in modes], logprobs_old=[[logp[0, m]] for m in modes],
        rewards=rewards.values(group.ids))
    new = step(policy, batch, OptimConfig(learning_rate=0.05))
    return float(policy.logits[0, mutant_mode]), float(new.logits[0, mutant_mode])
