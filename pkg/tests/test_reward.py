import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evolrl.consensus import GroupVerdict, majority_vote
from evolrl.embeddings import EmbeddingTable
from evolrl.novelty import NoveltyScores, score_novelty
from evolrl.reward import Scheme, evol_reward, majority_only_reward

from helpers import make_group


def _scores(normalized):
    z = {k: 0.0 for k in normalized}
    return NoveltyScores(z, z, z, dict(normalized))


def test_worked_fixture_rewards(three_vector_fixture):
    g = three_vector_fixture
    v = majority_vote(g)
    t = EmbeddingTable.from_mapping({r.id: r.embedding for r in g})
    r = evol_reward(v, score_novelty(t, v, 0.5))
    np.testing.assert_allclose([r.rewards[i] for i in g.ids], [1.0, 1.0, 0.5], atol=1e-6)
    assert r.scheme is Scheme.EVOL_RL


def test_band_edges():
    v = GroupVerdict("1", {"1": 2, "2": 1}, {"a": 1, "b": 1, "c": -1}, {"d"})
    r = evol_reward(v, _scores({"a": 1.0, "b": 0.0, "c": 0.0}))
    assert r.rewards == {"a": 1.0, "b": 0.5, "c": -1.0, "d": -1.0}
    r = evol_reward(v, _scores({"a": 0.0, "b": 0.0, "c": 1.0}))
    assert r.rewards["c"] == -0.5


def test_invalid_is_minus_one_regardless_of_embedding():
    g = make_group(["3", None, "3"], [np.array([1.0, 0]), np.array([0, 1.0]), np.array([0.6, 0.8])])
    v = majority_vote(g)
    t = EmbeddingTable.from_mapping({r.id: r.embedding for r in g})
    assert evol_reward(v, score_novelty(t, v)).rewards["r1"] == -1.0


def test_id_mismatch_raises():
    v = GroupVerdict("1", {"1": 1}, {"a": 1}, set())
    with pytest.raises(ValueError):
        evol_reward(v, _scores({"a": 0.0, "x": 0.0}))
    with pytest.raises(ValueError):
        evol_reward(v, _scores({}))


def test_majority_only():
    v = majority_vote(make_group(["7", "7", "3"]))
    assert majority_only_reward(v).values(["r0", "r1", "r2"]) == [1.0, 1.0, -1.0]
    v = majority_vote(make_group([None, None]))
    assert majority_only_reward(v).values(["r0", "r1"]) == [-1.0, -1.0]
    v = majority_vote(make_group(["9"]))
    assert majority_only_reward(v).rewards == {"r0": 1.0}


def test_all_invalid_under_evolrl():
    v = majority_vote(make_group([None, None, None]))
    r = evol_reward(v, score_novelty(EmbeddingTable(0, {}), v))
    assert list(r.rewards.values()) == [-1.0, -1.0, -1.0]


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from([1, -1, 0]), st.floats(0, 1)), min_size=1, max_size=64))
def test_bands_and_monotonicity(items):
    labels = {f"r{i}": lab for i, (lab, _) in enumerate(items) if lab != 0}
    invalid = {f"r{i}" for i, (lab, _) in enumerate(items) if lab == 0}
    ut = {f"r{i}": u for i, (lab, u) in enumerate(items) if lab != 0}
    v = GroupVerdict("1" if labels else None, {}, labels, invalid, ids=tuple(f"r{i}" for i in range(len(items))))
    r = evol_reward(v, _scores(ut)).rewards
    maj = [r[k] for k, lab in labels.items() if lab == 1]
    mino = [r[k] for k, lab in labels.items() if lab == -1]
    assert all(0.5 <= x <= 1.0 for x in maj)
    assert all(-1.0 <= x <= -0.5 for x in mino)
    assert all(r[k] == -1.0 for k in invalid)
    if maj and mino:
        assert min(maj) > max(mino)
    for k, lab in labels.items():
        base = 0.5 if lab == 1 else -1.0
        assert r[k] == pytest.approx(base + 0.5 * ut[k])
