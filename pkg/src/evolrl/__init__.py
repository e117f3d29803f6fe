"""Label-free RL rewards from majority-vote selection plus embedding novelty.

Majority agreement decides the reward band; novelty within the band decides
the position. Rewards feed group-relative advantages and a clipped surrogate
with an entropy bonus. A toy simulator shows majority-only rewards collapsing
onto one reasoning mode while the novelty-banded rewards keep several alive.
"""

__version__ = "0.1.0"

from .consensus import GroupVerdict, apply_vote_subsample, majority_vote
from .embeddings import EmbeddingTable, l2_normalize, lexical_embed, load_embedding_table
from .novelty import NoveltyScores, normalize_intra_group, novelty_raw, score_novelty, similarity_matrix
from .optimizer import (
    OptimConfig,
    ToyPolicy,
    TrajectoryBatch,
    clipped_surrogate,
    entropy_loss,
    finite_difference_gradient,
    group_advantages,
    kl_loss,
    step,
    total_loss,
)
from .reward import RewardVector, Scheme, evol_reward, majority_only_reward
from .rollout import PromptGroup, Rollout, extract_final_answer, parse_rollout_jsonl, split_reasoning
from .simulator import EnvConfig, MetricsRecord, ModeSpec, eval_pass_at_n, run_training, sample_rollouts
