"""Rubric representation, scheme-aware score computation, and proposal requests.

Two scoring schemes: subtractive rubrics start from full credit and apply
negative deductions; additive rubrics sum positive awards from zero. Both
clamp into [min_total, max_total], min first, then max. All arithmetic is
exact (``fractions.Fraction``); scores must reproduce bit-for-bit in
exports.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from .canon import frac_from_str, frac_to_str
from .errors import FormatUnsupported, UnknownRubricItem, ValidationFailed
from .model import ValidationReport

if TYPE_CHECKING:
    from .model import Question


class RubricScheme(str, Enum):
    SUBTRACTIVE = "subtractive"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class RubricItem:
    id: str
    label: str
    points: Fraction
    wisdom_notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "points": frac_to_str(self.points),
            "wisdom_notes": list(self.wisdom_notes),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RubricItem:
        return cls(
            id=str(data["id"]),
            label=str(data["label"]),
            points=frac_from_str(data["points"]),
            wisdom_notes=tuple(data.get("wisdom_notes", [])),
        )


@dataclass(frozen=True)
class Rubric:
    """Scored criteria for one question.

    Construction is permissive so that provider-proposed candidates can be
    represented and then checked with :func:`validate_rubric`; the grading
    path refuses invalid rubrics.
    """

    question_id: str
    scheme: RubricScheme
    items: tuple[RubricItem, ...]
    base_points: Fraction
    min_total: Fraction
    max_total: Fraction

    def item_ids(self) -> frozenset[str]:
        return frozenset(item.id for item in self.items)

    def item(self, item_id: str) -> RubricItem:
        for item in self.items:
            if item.id == item_id:
                return item
        raise UnknownRubricItem(f"rubric item {item_id!r} not in rubric")

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "scheme": self.scheme.value,
            "items": [item.to_dict() for item in self.items],
            "base_points": frac_to_str(self.base_points),
            "min_total": frac_to_str(self.min_total),
            "max_total": frac_to_str(self.max_total),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Rubric:
        return cls(
            question_id=str(data["question_id"]),
            scheme=RubricScheme(data["scheme"]),
            items=tuple(RubricItem.from_dict(item) for item in data["items"]),
            base_points=frac_from_str(data["base_points"]),
            min_total=frac_from_str(data["min_total"]),
            max_total=frac_from_str(data["max_total"]),
        )

    def with_item_wisdom(self, item_id: str, wisdom_ids: Iterable[str]) -> Rubric:
        items = tuple(
            replace(item, wisdom_notes=tuple(wisdom_ids)) if item.id == item_id else item
            for item in self.items
        )
        return replace(self, items=items)


@dataclass(frozen=True)
class RubricSelection:
    grade_record_id: str
    selected_item_ids: frozenset[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "grade_record_id": self.grade_record_id,
            "selected_item_ids": sorted(self.selected_item_ids),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RubricSelection:
        return cls(
            grade_record_id=str(data["grade_record_id"]),
            selected_item_ids=frozenset(data["selected_item_ids"]),
        )


def validate_rubric(candidate: Rubric) -> ValidationReport:
    """Report sign/scheme inconsistencies, bound inversions, duplicate ids."""
    violations: list[str] = []
    seen: set[str] = set()
    for item in candidate.items:
        if item.id in seen:
            violations.append(f"duplicate item id {item.id!r}")
        seen.add(item.id)
        if not item.label.strip():
            violations.append(f"item {item.id!r} has an empty label")
        if candidate.scheme is RubricScheme.SUBTRACTIVE and item.points > 0:
            violations.append(f"item {item.id!r} has positive points in a subtractive rubric")
        if candidate.scheme is RubricScheme.ADDITIVE and item.points < 0:
            violations.append(f"item {item.id!r} has negative points in an additive rubric")
    if candidate.min_total > candidate.max_total:
        violations.append("min_total exceeds max_total")
    if candidate.scheme is RubricScheme.SUBTRACTIVE:
        if candidate.base_points > candidate.max_total:
            violations.append("subtractive base_points exceeds max_total")
    elif candidate.base_points != 0:
        violations.append("additive rubric must have base_points 0")
    return ValidationReport(tuple(violations))


def require_valid(rubric: Rubric) -> Rubric:
    report = validate_rubric(rubric)
    if not report.ok:
        raise ValidationFailed("; ".join(report.violations))
    return rubric


def clamp(value: Fraction, low: Fraction, high: Fraction) -> Fraction:
    # Min bound first, then max; fixed order so a degenerate low > high
    # window still resolves deterministically.
    if value < low:
        value = low
    if value > high:
        value = high
    return value


def compute_score(rubric: Rubric, selection: RubricSelection) -> Fraction:
    """Score a selection under the rubric's scheme, clamped into bounds.

    Pure function: identical inputs always give identical outputs.
    Raises :class:`UnknownRubricItem` if the selection references an id the
    rubric does not define.
    """
    require_valid(rubric)
    known = rubric.item_ids()
    unknown = selection.selected_item_ids - known
    if unknown:
        raise UnknownRubricItem(f"selection references unknown items: {sorted(unknown)}")
    total = sum(
        (item.points for item in rubric.items if item.id in selection.selected_item_ids),
        Fraction(0),
    )
    if rubric.scheme is RubricScheme.SUBTRACTIVE:
        raw = rubric.base_points + total
    else:
        raw = total
    return clamp(raw, rubric.min_total, rubric.max_total)


def no_response_score(rubric: Rubric) -> Fraction:
    """Score for an explicitly blank response.

    Subtractive rubrics bottom out at min_total; additive ones score zero,
    still clamped so the score never leaves [min_total, max_total].
    """
    if rubric.scheme is RubricScheme.SUBTRACTIVE:
        return rubric.min_total
    return clamp(Fraction(0), rubric.min_total, rubric.max_total)


@dataclass(frozen=True)
class RubricProposalRequest:
    """Inputs the provider needs to draft a rubric for an open-ended question."""

    question_id: str
    statement: str
    reference_solution: str | None
    scheme: RubricScheme
    point_budget: Fraction

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "statement": self.statement,
            "reference_solution": self.reference_solution,
            "scheme": self.scheme.value,
            "point_budget": frac_to_str(self.point_budget),
        }


def build_rubric_proposal_request(
    question: "Question",
    scheme: RubricScheme = RubricScheme.SUBTRACTIVE,
    point_budget: Fraction = Fraction(10),
) -> RubricProposalRequest:
    from .model import QuestionFormat

    if question.format is not QuestionFormat.TEXT_CODE:
        raise FormatUnsupported(
            f"rubric proposals apply to text/code questions, not {question.format.value}"
        )
    return RubricProposalRequest(
        question_id=question.id,
        statement=question.statement,
        reference_solution=question.reference_solution,
        scheme=scheme,
        point_budget=point_budget,
    )
