"""Canonical entity types shared by every other module.

Entities are immutable value objects with a fixed snake_case JSON shape;
``to_dict``/``from_dict`` round-trip byte-identically through
:func:`gradeloop.canon.canonical_json`. Mutation happens only through the
persistence layer, which stores fresh copies.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Mapping

from .canon import frac_from_str, frac_to_str

if TYPE_CHECKING:
    from .rubric import Rubric

_ID_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "gradeloop")


def new_id() -> str:
    return str(uuid.uuid4())


def derived_id(kind: str, *parts: str) -> str:
    """Deterministic UUID-shaped id for entities created by the pipeline.

    Repeated runs over identical inputs must produce identical exports, so
    anything not named by the client derives its id from stable keys.
    """
    return str(uuid.uuid5(_ID_NAMESPACE, kind + ":" + "/".join(parts)))


class QuestionFormat(str, Enum):
    SSMC = "ssmc"
    MSMC = "msmc"
    DRAWING = "drawing"
    TEXT_CODE = "text_code"


class ConfidenceTier(str, Enum):
    """Grading confidence; totally ordered low < medium < high."""

    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _TIER_RANK[self]

    def __lt__(self, other: object) -> bool:  # type: ignore[override]
        if not isinstance(other, ConfidenceTier):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other: object) -> bool:  # type: ignore[override]
        if not isinstance(other, ConfidenceTier):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other: object) -> bool:  # type: ignore[override]
        if not isinstance(other, ConfidenceTier):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other: object) -> bool:  # type: ignore[override]
        if not isinstance(other, ConfidenceTier):
            return NotImplemented
        return self.rank >= other.rank


_TIER_RANK = {ConfidenceTier.LOW: 0, ConfidenceTier.MEDIUM: 1, ConfidenceTier.HIGH: 2}


class TranscriptionConfidence(str, Enum):
    """Binary transcription certainty; distinct from grading tiers."""

    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "violations": list(self.violations)}


@dataclass(frozen=True)
class StudentRef:
    id: str
    display_name: str

    def __post_init__(self) -> None:
        if not self.display_name.strip():
            raise ValueError("display_name must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "display_name": self.display_name}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StudentRef:
        return cls(id=str(data["id"]), display_name=str(data["display_name"]))


@dataclass(frozen=True)
class Course:
    id: str
    name: str
    roster: tuple[StudentRef, ...] = ()
    # Free-form tag used by analytics subject breakdowns ("CS", "Math", ...).
    subject: str | None = None

    def __post_init__(self) -> None:
        ids = [s.id for s in self.roster]
        if len(set(ids)) != len(ids):
            raise ValueError("roster student ids must be unique within a course")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "roster": [s.to_dict() for s in self.roster],
            "subject": self.subject,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Course:
        return cls(
            id=str(data["id"]),
            name=str(data["name"]),
            roster=tuple(StudentRef.from_dict(s) for s in data.get("roster", [])),
            subject=data.get("subject"),
        )


@dataclass(frozen=True)
class Assignment:
    id: str
    course_id: str
    title: str

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "course_id": self.course_id, "title": self.title}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Assignment:
        return cls(id=str(data["id"]), course_id=str(data["course_id"]), title=str(data["title"]))


@dataclass(frozen=True)
class PageRegion:
    """Rectangle on one page of a submission, in normalized [0,1] coordinates."""

    page_index: int
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if self.page_index < 0:
            raise ValueError("page_index must be >= 0")
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(0.0 <= c <= 1.0 for c in coords):
            raise ValueError("region coordinates must lie in [0,1]")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError("region must have x0 <= x1 and y0 <= y1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "page_index": self.page_index,
            "x0": self.x0,
            "y0": self.y0,
            "x1": self.x1,
            "y1": self.y1,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PageRegion:
        return cls(
            page_index=int(data["page_index"]),
            x0=float(data["x0"]),
            y0=float(data["y0"]),
            x1=float(data["x1"]),
            y1=float(data["y1"]),
        )


@dataclass(frozen=True)
class ImageRegion:
    """A page region resolved to a stored page image, as sent to the provider."""

    page: str
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"page": self.page, "x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}


@dataclass(frozen=True)
class Question:
    id: str
    assignment_id: str
    ordinal: int
    format: QuestionFormat
    statement: str
    reference_solution: str | None = None
    # MC-only: option universe, key, and point value for the autograder.
    options: tuple[str, ...] = ()
    answer_key: frozenset[str] = frozenset()
    points: Fraction | None = None
    rubric: "Rubric | None" = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "assignment_id": self.assignment_id,
            "ordinal": self.ordinal,
            "format": self.format.value,
            "statement": self.statement,
            "reference_solution": self.reference_solution,
            "options": list(self.options),
            "answer_key": sorted(self.answer_key),
            "points": frac_to_str(self.points) if self.points is not None else None,
            "rubric": self.rubric.to_dict() if self.rubric is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Question:
        from .rubric import Rubric

        rubric = data.get("rubric")
        points = data.get("points")
        return cls(
            id=str(data["id"]),
            assignment_id=str(data["assignment_id"]),
            ordinal=int(data["ordinal"]),
            format=QuestionFormat(data["format"]),
            statement=str(data["statement"]),
            reference_solution=data.get("reference_solution"),
            options=tuple(data.get("options", [])),
            answer_key=frozenset(data.get("answer_key", [])),
            points=frac_from_str(points) if points is not None else None,
            rubric=Rubric.from_dict(rubric) if rubric is not None else None,
        )

    def with_rubric(self, rubric: "Rubric | None") -> Question:
        return replace(self, rubric=rubric)


def validate_question(question: Question, for_grading: bool = True) -> ValidationReport:
    """Collect invariant violations; an empty report means valid.

    Violations are data, not failures: proposed questions flow through here
    before a grading run will accept them. With ``for_grading`` off, a
    free-response question may still lack its rubric (the shape a question
    has at creation, before the rubric is attached).
    """
    violations: list[str] = []
    if question.ordinal < 1:
        violations.append("ordinal must be 1-based")
    fmt = question.format
    if fmt is QuestionFormat.SSMC:
        if len(question.answer_key) != 1:
            violations.append("SSMC answer_key must be exactly one option label")
        violations.extend(_mc_shape_violations(question))
    elif fmt is QuestionFormat.MSMC:
        if not question.answer_key:
            violations.append("MSMC key empty")
        violations.extend(_mc_shape_violations(question))
    elif fmt is QuestionFormat.TEXT_CODE:
        if question.rubric is None:
            if for_grading:
                violations.append("rubric required before grading")
        elif question.rubric.question_id != question.id:
            violations.append("rubric is bound to a different question")
    if fmt in (QuestionFormat.DRAWING, QuestionFormat.TEXT_CODE) and question.answer_key:
        violations.append(f"{fmt.value} questions must not carry an answer key")
    return ValidationReport(tuple(violations))


def _mc_shape_violations(question: Question) -> list[str]:
    violations = []
    if not question.options:
        violations.append("multiple-choice question must declare its options")
    elif not question.answer_key <= set(question.options):
        violations.append("answer_key labels must be declared options")
    if question.points is None or question.points <= 0:
        violations.append("multiple-choice question must declare positive points")
    return violations


@dataclass(frozen=True)
class Submission:
    """One student's scanned work for an assignment.

    ``pages`` are opaque references to stored page images; ``region_map``
    locates each question's answer area, and ``mc_responses`` carries
    already-extracted bubble selections declared by the upload manifest.
    """

    id: str
    assignment_id: str
    pages: tuple[str, ...]
    student: StudentRef | None = None
    region_map: Mapping[str, PageRegion] = field(default_factory=dict)
    name_region: PageRegion | None = None
    mc_responses: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.pages:
            raise ValueError("submission must have at least one page")
        for question_id, region in self.region_map.items():
            if region.page_index >= len(self.pages):
                raise ValueError(f"region for {question_id} points past the last page")

    def resolve_region(self, question_id: str) -> ImageRegion | None:
        region = self.region_map.get(question_id)
        if region is None:
            return None
        return ImageRegion(
            page=self.pages[region.page_index],
            x0=region.x0,
            y0=region.y0,
            x1=region.x1,
            y1=region.y1,
        )

    def resolve_name_region(self) -> ImageRegion | None:
        if self.name_region is None:
            return None
        return ImageRegion(
            page=self.pages[self.name_region.page_index],
            x0=self.name_region.x0,
            y0=self.name_region.y0,
            x1=self.name_region.x1,
            y1=self.name_region.y1,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "assignment_id": self.assignment_id,
            "pages": list(self.pages),
            "student": self.student.to_dict() if self.student else None,
            "region_map": {qid: r.to_dict() for qid, r in sorted(self.region_map.items())},
            "name_region": self.name_region.to_dict() if self.name_region else None,
            "mc_responses": {
                qid: sorted(chosen) for qid, chosen in sorted(self.mc_responses.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Submission:
        student = data.get("student")
        name_region = data.get("name_region")
        return cls(
            id=str(data["id"]),
            assignment_id=str(data["assignment_id"]),
            pages=tuple(data["pages"]),
            student=StudentRef.from_dict(student) if student else None,
            region_map={
                qid: PageRegion.from_dict(r) for qid, r in data.get("region_map", {}).items()
            },
            name_region=PageRegion.from_dict(name_region) if name_region else None,
            mc_responses={
                qid: frozenset(chosen) for qid, chosen in data.get("mc_responses", {}).items()
            },
        )

    def with_student(self, student: StudentRef) -> Submission:
        return replace(self, student=student)
