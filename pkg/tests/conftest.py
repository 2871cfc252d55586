"""Shared builders for unit tests: rubrics, questions, submissions, fixtures."""

from fractions import Fraction

import pytest
from hypothesis import settings

from gradeloop.model import (
    ImageRegion,
    PageRegion,
    Question,
    QuestionFormat,
    StudentRef,
    Submission,
    derived_id,
)
from gradeloop.rubric import Rubric, RubricItem, RubricScheme

settings.register_profile("suite", deadline=None, derandomize=True)
settings.load_profile("suite")

ASSIGNMENT_ID = "assignment-1"


def make_rubric(
    question_id: str = "q-text",
    scheme: RubricScheme = RubricScheme.SUBTRACTIVE,
    items: tuple[tuple[str, int], ...] = (("e1", -2), ("e2", -3)),
    base: int = 5,
    min_total: int = 0,
    max_total: int = 5,
) -> Rubric:
    return Rubric(
        question_id=question_id,
        scheme=scheme,
        items=tuple(
            RubricItem(id=item_id, label=f"error {item_id}", points=Fraction(points))
            for item_id, points in items
        ),
        base_points=Fraction(base),
        min_total=Fraction(min_total),
        max_total=Fraction(max_total),
    )


def make_text_question(question_id: str = "q-text", rubric: Rubric | None = None) -> Question:
    return Question(
        id=question_id,
        assignment_id=ASSIGNMENT_ID,
        ordinal=1,
        format=QuestionFormat.TEXT_CODE,
        statement="Explain the algorithm.",
        reference_solution="It terminates because the bound decreases.",
        rubric=rubric if rubric is not None else make_rubric(question_id),
    )


def make_submission(
    index: int,
    question_id: str = "q-text",
    student: StudentRef | None = None,
    assignment_id: str = ASSIGNMENT_ID,
) -> Submission:
    page = f"page-{index:03d}.png"
    return Submission(
        id=derived_id("submission", assignment_id, str(index)),
        assignment_id=assignment_id,
        pages=(page,),
        student=student or StudentRef(id=f"s{index:02d}", display_name=f"Student {index:02d}"),
        region_map={question_id: PageRegion(page_index=0, x0=0.1, y0=0.3, x1=0.9, y1=0.8)},
    )


@pytest.fixture
def subtractive_rubric() -> Rubric:
    return make_rubric()


@pytest.fixture
def additive_rubric() -> Rubric:
    return make_rubric(
        scheme=RubricScheme.ADDITIVE,
        items=(("p1", 2), ("p2", 3)),
        base=0,
        min_total=0,
        max_total=5,
    )


@pytest.fixture
def region() -> ImageRegion:
    return ImageRegion(page="page-000.png", x0=0.1, y0=0.3, x1=0.9, y1=0.8)
