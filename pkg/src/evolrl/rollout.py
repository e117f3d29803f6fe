"""Rollout records, prompt groups, JSONL ingestion and boxed-answer extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

BOX_COMMAND = "\\boxed{"
UNIT_NORM_TOL = 1e-6


class RolloutFormatError(ValueError):
    """Raised for malformed rollout JSONL input. ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _boxed_spans(text: str) -> list[tuple[int, int]]:
    # (start of the command, index one past the closing brace); unbalanced boxes get end = -1
    spans = []
    start = text.find(BOX_COMMAND)
    while start != -1:
        depth = 1
        i = start + len(BOX_COMMAND)
        end = -1
        while i < len(text):
            ch = text[i]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = i + 1
                    break
            i += 1
        spans.append((start, end))
        start = text.find(BOX_COMMAND, start + len(BOX_COMMAND))
    return spans


def extract_final_answer(text: str) -> Optional[str]:
    """Return the trimmed content of the last ``\\boxed{...}``, or None.

    The content must be brace-balanced and contain at least one ASCII digit.
    """
    spans = _boxed_spans(text)
    if not spans:
        return None
    start, end = spans[-1]
    if end == -1:
        return None
    content = text[start + len(BOX_COMMAND): end - 1].strip()
    if not any("0" <= ch <= "9" for ch in content):
        return None
    return content


def split_reasoning(text: str) -> str:
    """Drop the final ``\\boxed{...}`` span and everything after it."""
    spans = _boxed_spans(text)
    if not spans:
        return text
    return text[: spans[-1][0]]


@dataclass
class Rollout:
    id: str
    prompt_id: str
    text: str
    reasoning: str
    answer: Optional[str] = None
    embedding: Optional[np.ndarray] = None
    token_logprobs_old: Optional[tuple[float, ...]] = None
    length: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"rollout {self.id!r}: length must be >= 1, got {self.length}")

    @classmethod
    def from_text(cls, id: str, prompt_id: str, text: str, *, embedding=None,
                  token_logprobs_old=None, length: Optional[int] = None) -> "Rollout":
        if embedding is not None:
            embedding = _unit_or_raise(np.asarray(embedding, dtype=np.float64), id)
        if token_logprobs_old is not None:
            token_logprobs_old = tuple(float(x) for x in token_logprobs_old)
        if length is None:
            if token_logprobs_old:
                length = len(token_logprobs_old)
            else:
                length = max(1, len(text.split()))
        return cls(
            id=id,
            prompt_id=prompt_id,
            text=text,
            reasoning=split_reasoning(text),
            answer=extract_final_answer(text),
            embedding=embedding,
            token_logprobs_old=token_logprobs_old,
            length=int(length),
        )

    @property
    def valid(self) -> bool:
        return self.answer is not None

    def to_json(self) -> str:
        record: dict = {"id": self.id, "prompt_id": self.prompt_id, "text": self.text}
        if self.embedding is not None:
            record["embedding"] = [float(x) for x in self.embedding]
        if self.token_logprobs_old is not None:
            record["token_logprobs_old"] = list(self.token_logprobs_old)
        record["length"] = self.length
        return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


@dataclass
class PromptGroup:
    prompt_id: str
    rollouts: list[Rollout] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.rollouts:
            if r.prompt_id != self.prompt_id:
                raise ValueError(f"rollout {r.id!r} belongs to prompt {r.prompt_id!r}, not {self.prompt_id!r}")
            if r.id in seen:
                raise ValueError(f"duplicate rollout id {r.id!r} in prompt {self.prompt_id!r}")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.rollouts)

    def __iter__(self) -> Iterator[Rollout]:
        return iter(self.rollouts)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.rollouts]

    def by_id(self) -> dict[str, Rollout]:
        return {r.id: r for r in self.rollouts}

    def subset(self, ids: Sequence[str]) -> "PromptGroup":
        lookup = self.by_id()
        return PromptGroup(self.prompt_id, [lookup[i] for i in ids])


def _unit_or_raise(v: np.ndarray, rollout_id: str) -> np.ndarray:
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"rollout {rollout_id!r}: embedding must be a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"rollout {rollout_id!r}: embedding has non-finite entries")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError(f"rollout {rollout_id!r}: zero-norm embedding")
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        v = v / norm
    return v


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _parse_line(obj, lineno: int) -> Rollout:
    if not isinstance(obj, dict):
        raise RolloutFormatError("expected a JSON object", lineno)
    for key in ("id", "prompt_id", "text"):
        if not isinstance(obj.get(key), str):
            raise RolloutFormatError(f"field {key!r} must be a string", lineno)
    embedding = obj.get("embedding")
    if embedding is not None and not (isinstance(embedding, list) and all(_is_number(x) for x in embedding)):
        raise RolloutFormatError("field 'embedding' must be an array of numbers", lineno)
    logprobs = obj.get("token_logprobs_old")
    if logprobs is not None and not (isinstance(logprobs, list) and all(_is_number(x) for x in logprobs)):
        raise RolloutFormatError("field 'token_logprobs_old' must be an array of numbers", lineno)
    length = obj.get("length")
    if length is not None and (not isinstance(length, int) or isinstance(length, bool) or length < 1):
        raise RolloutFormatError("field 'length' must be a positive integer", lineno)
    try:
        return Rollout.from_text(obj["id"], obj["prompt_id"], obj["text"], embedding=embedding,
                                 token_logprobs_old=logprobs, length=length)
    except ValueError as exc:
        raise RolloutFormatError(str(exc), lineno) from exc


def parse_rollout_jsonl(stream: Iterable[str]) -> list[PromptGroup]:
    """Parse rollout JSONL into prompt groups, in order of first appearance.

    Blank lines are skipped. Errors carry the 1-based line number.
    """
    groups: dict[str, list[Rollout]] = {}
    seen: dict[str, set[str]] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RolloutFormatError(f"invalid JSON ({exc.msg})", lineno) from exc
        rollout = _parse_line(obj, lineno)
        ids = seen.setdefault(rollout.prompt_id, set())
        if rollout.id in ids:
            raise RolloutFormatError(f"duplicate id {rollout.id!r} in prompt {rollout.prompt_id!r}", lineno)
        ids.add(rollout.id)
        groups.setdefault(rollout.prompt_id, []).append(rollout)
    return [PromptGroup(pid, rollouts) for pid, rollouts in groups.items()]


def serialize_rollouts(groups: Iterable[PromptGroup]) -> str:
    return "".join(r.to_json() + "\n" for g in groups for r in g)
