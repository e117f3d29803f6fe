import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evolrl.rollout import (
    PromptGroup,
    Rollout,
    RolloutFormatError,
    extract_final_answer,
    parse_rollout_jsonl,
    serialize_rollouts,
    split_reasoning,
)

from oracles import last_box_prefix


@pytest.mark.parametrize("text, expected", [
    ("so \\boxed{42}.", "42"),
    ("\\boxed{1} then \\boxed{2}", "2"),
    ("\\boxed{abc}", None),
    ("no box at all", None),
    ("\\boxed{ 7 }", "7"),
    ("\\boxed{\\frac{1}{2}}", "\\frac{1}{2}"),
    ("\\boxed{x+1}", "x+1"),
    ("\\boxed{3} and \\boxed{4", None),
    ("\\boxed{}", None),
])
def test_extract_final_answer(text, expected):
    assert extract_final_answer(text) == expected


@pytest.mark.parametrize("text, expected", [
    ("A. B. \\boxed{3} done", "A. B. "),
    ("no box", "no box"),
    ("\\boxed{1}x\\boxed{2}y", "\\boxed{1}x"),
])
def test_split_reasoning(text, expected):
    assert split_reasoning(text) == expected


@given(st.text(alphabet=st.characters(blacklist_characters="{}"), min_size=0, max_size=30),
       st.integers(0, 9),
       st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=30))
def test_extract_roundtrip_on_boxed_answers(prefix, digit, suffix):
    answer = (prefix + str(digit) + suffix).strip()
    assert extract_final_answer("\\boxed{" + answer + "}") == answer


@given(st.lists(st.sampled_from(["a", "b", " ", "\\boxed{", "}", "{", "1", "\\box"]), max_size=20))
def test_split_reasoning_matches_scan_oracle(parts):
    text = "".join(parts)
    assert split_reasoning(text) == last_box_prefix(text)


def _line(**kw):
    return json.dumps(kw)


def test_parse_groups_in_order():
    data = "\n".join([
        _line(id="a", prompt_id="p1", text="\\boxed{1}"),
        _line(id="b", prompt_id="p2", text="\\boxed{2}"),
        _line(id="c", prompt_id="p1", text="\\boxed{3}"),
    ])
    groups = parse_rollout_jsonl(io.StringIO(data))
    assert [g.prompt_id for g in groups] == ["p1", "p2"]
    assert [len(g) for g in groups] == [2, 1]
    assert groups[0].ids == ["a", "c"]
    assert groups[0].rollouts[1].answer == "3"


def test_parse_reports_line_number():
    with pytest.raises(RolloutFormatError) as err:
        parse_rollout_jsonl(io.StringIO("not json\n"))
    assert err.value.line == 1
    assert "line 1" in str(err.value)

    data = _line(id="a", prompt_id="p", text="x") + "\n" + _line(id="b", prompt_id="p") + "\n"
    with pytest.raises(RolloutFormatError) as err:
        parse_rollout_jsonl(io.StringIO(data))
    assert err.value.line == 2


def test_parse_normalizes_embedding():
    groups = parse_rollout_jsonl(io.StringIO(_line(id="a", prompt_id="p", text="t", embedding=[3, 4])))
    np.testing.assert_allclose(groups[0].rollouts[0].embedding, [0.6, 0.8], atol=1e-15)


def test_parse_rejects_zero_embedding_and_duplicates():
    with pytest.raises(RolloutFormatError, match="zero-norm"):
        parse_rollout_jsonl(io.StringIO(_line(id="a", prompt_id="p", text="t", embedding=[0, 0])))
    dup = _line(id="a", prompt_id="p", text="t") + "\n" + _line(id="a", prompt_id="p", text="u")
    with pytest.raises(RolloutFormatError, match="duplicate"):
        parse_rollout_jsonl(io.StringIO(dup))
    # the same id under different prompts is fine
    ok = _line(id="a", prompt_id="p", text="t") + "\n" + _line(id="a", prompt_id="q", text="u")
    assert len(parse_rollout_jsonl(io.StringIO(ok))) == 2


def test_length_defaults():
    g = parse_rollout_jsonl(io.StringIO("\n".join([
        _line(id="a", prompt_id="p", text="one two three"),
        _line(id="b", prompt_id="p", text="x", token_logprobs_old=[-0.1, -0.2]),
        _line(id="c", prompt_id="p", text="x", length=9),
    ])))[0]
    assert [r.length for r in g] == [3, 2, 9]
    with pytest.raises(RolloutFormatError):
        parse_rollout_jsonl(io.StringIO(_line(id="a", prompt_id="p", text="x", length=0)))


def test_serialize_parse_roundtrip_is_byte_identical():
    canonical = (
        '{"id":"a","prompt_id":"p","text":"step \\\\boxed{4}","embedding":[0.6,0.8],"length":2}\n'
        '{"id":"b","prompt_id":"p","text":"other","token_logprobs_old":[-0.5,-1.25],"length":2}\n'
        '{"id":"c","prompt_id":"q","text":"é \\\\boxed{1}","length":2}\n'
    )
    once = serialize_rollouts(parse_rollout_jsonl(io.StringIO(canonical)))
    assert once == canonical
    assert serialize_rollouts(parse_rollout_jsonl(io.StringIO(once))) == once


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=12))
def test_parsed_embeddings_are_unit(values):
    if np.linalg.norm(values) < 1e-6:
        return
    line = _line(id="a", prompt_id="p", text="t", embedding=values)
    r = parse_rollout_jsonl(io.StringIO(line))[0].rollouts[0]
    assert abs(np.linalg.norm(r.embedding) - 1.0) <= 1e-6
    again = parse_rollout_jsonl(io.StringIO(r.to_json()))[0].rollouts[0]
    assert again.to_json() == r.to_json()


def test_prompt_group_invariants():
    r1 = Rollout.from_text("a", "p", "x")
    r2 = Rollout.from_text("a", "p", "y")
    with pytest.raises(ValueError):
        PromptGroup("p", [r1, r2])
    with pytest.raises(ValueError):
        PromptGroup("q", [r1])
