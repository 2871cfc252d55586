"""Deterministic autograding for single- and multi-select multiple choice."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping


class MsmcPolicy(str, Enum):
    # Partial credit is an explicit opt-in; exact match is the default.
    EXACT_MATCH = "exact_match"
    PER_OPTION = "per_option"


@dataclass(frozen=True)
class McResponse:
    question_id: str
    chosen: frozenset[str]

    def to_dict(self) -> dict[str, Any]:
        return {"question_id": self.question_id, "chosen": sorted(self.chosen)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> McResponse:
        return cls(question_id=str(data["question_id"]), chosen=frozenset(data["chosen"]))


def grade_ssmc(key: frozenset[str], response: McResponse, points: Fraction) -> Fraction:
    """Full points iff exactly the keyed option was chosen; blank scores 0."""
    if len(key) != 1:
        raise ValueError("SSMC key must contain exactly one option")
    return points if response.chosen == key else Fraction(0)


def grade_msmc(
    key: frozenset[str],
    options: Iterable[str],
    response: McResponse,
    points: Fraction,
    policy: MsmcPolicy = MsmcPolicy.EXACT_MATCH,
) -> Fraction:
    """Grade a multi-select response against the key.

    ``exact_match``: all-or-nothing. ``per_option``: each declared option is
    correctly marked iff its membership in the response matches the key;
    credit is the matching fraction of ``points``.
    """
    if not key:
        raise ValueError("MSMC key must be non-empty")
    option_list = list(options)
    if policy is MsmcPolicy.EXACT_MATCH:
        return points if response.chosen == key else Fraction(0)
    if not option_list:
        raise ValueError("per-option grading requires the declared option list")
    correct = sum(
        1 for option in option_list if (option in response.chosen) == (option in key)
    )
    score = points * Fraction(correct, len(option_list))
    return score if score > 0 else Fraction(0)
