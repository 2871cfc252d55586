"""Synthetic corpora: a small demo class and large planted-rate cohorts.

The demo bundle drives the CLI demo, end-to-end tests, and the UI against
a fully deterministic mock provider fixture. The cohort builder plants
known per-subject correctness rates so accuracy reporting can be checked
against ground truth at scale.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .model import (
    Assignment,
    Course,
    PageRegion,
    Question,
    QuestionFormat,
    StudentRef,
    Submission,
    derived_id,
)
from .rubric import Rubric, RubricItem, RubricScheme

DEMO_STUDENTS = (
    ("s01", "Alice Zhang"),
    ("s02", "Brian Okafor"),
    ("s03", "Carmen Diaz"),
    ("s04", "Deepa Iyer"),
    ("s05", "Elias Novak"),
    ("s06", "Farah Haddad"),
    ("s07", "Gustavo Lima"),
    ("s08", "Hana Sato"),
    ("s09", "Ian McAllister"),
    ("s10", "Jiwoo Park"),
)

# q3 machine selections before any calibration; None marks a blank page.
_DEMO_PRE: dict[str, tuple[list[str] | None, str]] = {
    "s01": ([], "high"),
    "s02": (["r-loop"], "high"),
    "s03": (["r-init"], "high"),
    "s04": ([], "high"),
    "s05": (["r-term"], "high"),
    "s06": (["r-init", "r-loop"], "high"),
    "s07": (["r-init"], "medium"),
    "s08": (["r-loop", "r-term"], "low"),
    "s09": (None, "high"),
    "s10": ([], "high"),
}

# What the instructor believes; differs from the machine for s06 and s10.
DEMO_TRUTH: dict[str, list[str]] = {
    "s01": [],
    "s02": ["r-loop"],
    "s03": ["r-init"],
    "s04": [],
    "s05": ["r-term"],
    "s06": ["r-loop"],
    "s07": ["r-init"],
    "s08": ["r-loop", "r-term"],
    "s09": [],
    "s10": ["r-term"],
}

_DEMO_MC1 = {
    "s01": ["B"], "s02": ["B"], "s03": ["C"], "s04": ["B"], "s05": ["A"],
    "s06": ["B"], "s07": ["B"], "s08": ["D"], "s09": [], "s10": ["B"],
}
_DEMO_MC2 = {
    "s01": ["A", "C"], "s02": ["A"], "s03": ["A", "C", "D"], "s04": ["C"],
    "s05": ["A", "C"], "s06": ["B", "D"], "s07": ["A", "B"], "s08": [],
    "s09": ["C"], "s10": ["A", "C"],
}


def demo_ids() -> dict[str, str]:
    """The deterministic ids the seeded demo entities will receive."""
    course_id = derived_id("course", "Intro to Computer Systems", "CS")
    assignment_id = derived_id("assignment", course_id, "Midterm 1")
    return {
        "course": course_id,
        "assignment": assignment_id,
        "q1": derived_id("question", assignment_id, "1"),
        "q2": derived_id("question", assignment_id, "2"),
        "q3": derived_id("question", assignment_id, "3"),
    }


def build_demo_bundle() -> dict[str, Any]:
    """Seed payloads plus the matching mock provider fixture.

    Ten students, three questions (single-select, multi-select, and a
    free-response explanation with a subtractive rubric). Students s06 and
    s10 are misgraded before calibration and fixed by the post-wisdom
    variants, so one calibration round moves sample agreement from 8/10
    to 10/10.
    """
    ids = demo_ids()
    files = [f"scan-{index:03d}.png" for index in range(len(DEMO_STUDENTS))]

    seed = {
        "course": {
            "name": "Intro to Computer Systems",
            "subject": "CS",
            "roster": [
                {"id": student_id, "display_name": name} for student_id, name in DEMO_STUDENTS
            ],
        },
        "assignment": {"title": "Midterm 1"},
        "questions": [
            {
                "ordinal": 1,
                "format": "ssmc",
                "statement": "Which structure gives O(1) amortized append?",
                "options": ["A", "B", "C", "D"],
                "answer_key": ["B"],
                "points": "2",
            },
            {
                "ordinal": 2,
                "format": "msmc",
                "statement": "Select every property a mutex guarantees.",
                "options": ["A", "B", "C", "D"],
                "answer_key": ["A", "C"],
                "points": "4",
            },
            {
                "ordinal": 3,
                "format": "text_code",
                "statement": "Explain why the loop terminates and what it computes.",
                "reference_solution": (
                    "The index increases by one each pass and the bound is fixed, so the"
                    " loop runs exactly n times and the accumulator holds the sum."
                ),
            },
        ],
        "rubrics": {
            "3": {
                "scheme": "subtractive",
                "base_points": "6",
                "min_total": "0",
                "max_total": "6",
                "items": [
                    {"id": "r-init", "label": "Accumulator not initialized", "points": "-1"},
                    {"id": "r-loop", "label": "Loop bound off by one", "points": "-2"},
                    {"id": "r-term", "label": "No termination argument", "points": "-3"},
                ],
            }
        },
        "manifest": {
            "assignment_id": ids["assignment"],
            "files": files,
            "template_pages": 1,
            "layout": {
                "3": {"page_index": 0, "x0": 0.1, "y0": 0.45, "x1": 0.9, "y1": 0.8}
            },
            "name_region": {"page_index": 0, "x0": 0.1, "y0": 0.05, "x1": 0.9, "y1": 0.15},
            "mc_responses": {
                str(index): {"1": _DEMO_MC1[student_id], "2": _DEMO_MC2[student_id]}
                for index, (student_id, _) in enumerate(DEMO_STUDENTS)
            },
        },
    }

    names = {}
    pages = {}
    responses: dict[str, dict[str, Any]] = {}
    for index, (student_id, display_name) in enumerate(DEMO_STUDENTS):
        page = files[index]
        names[page] = {"text": display_name, "confidence": "high"}
        pages[page] = student_id
        pre, tier = _DEMO_PRE[student_id]
        if pre is None:
            row: dict[str, Any] = {"text": "", "transcription_confidence": "high"}
        else:
            row = {
                "text": f"{student_id}: the index grows each pass so the loop ends.",
                "transcription_confidence": "high",
                "pre": {"selected": pre, "confidence": tier},
                "post": {"selected": DEMO_TRUTH[student_id], "confidence": "high" if tier == "high" else tier},
            }
        responses[student_id] = row
    fixture = {
        "names": names,
        "pages": pages,
        "responses": {ids["q3"]: responses},
    }
    return {"ids": ids, "seed": seed, "fixture": fixture}


def seed_demo(base_url: str, bundle: dict[str, Any], client: Any) -> dict[str, Any]:
    """Drive the HTTP API to load a bundle and grade every question.

    ``client`` is any httpx-compatible client. Returns the created ids.
    Safe to repeat: creation endpoints treat identical re-posts as no-ops
    and grading runs are only started for questions without one.
    """
    seed = bundle["seed"]

    def post(path: str, body: dict[str, Any]) -> dict[str, Any]:
        response = client.post(f"{base_url}{path}", json=body)
        if response.status_code >= 400:
            raise RuntimeError(f"POST {path} failed: {response.status_code} {response.text}")
        return response.json()

    course = post("/courses", seed["course"])
    assignment = post(
        "/assignments", {"course_id": course["id"], "title": seed["assignment"]["title"]}
    )
    questions = {}
    for body in seed["questions"]:
        question = post("/questions", {**body, "assignment_id": assignment["id"]})
        questions[str(body["ordinal"])] = question
    for ordinal, rubric_body in seed["rubrics"].items():
        response = client.put(
            f"{base_url}/questions/{questions[ordinal]['id']}/rubric", json=rubric_body
        )
        if response.status_code >= 400:
            raise RuntimeError(f"rubric upload failed: {response.text}")
    post("/submissions/bulk", seed["manifest"])
    for ordinal in sorted(questions):
        question_id = questions[ordinal]["id"]
        runs = client.get(f"{base_url}/questions/{question_id}/grading-runs").json()
        if not runs:
            post(f"/questions/{question_id}/grading-runs?wait=true", {})
    return {
        "course_id": course["id"],
        "assignment_id": assignment["id"],
        "question_ids": {ordinal: q["id"] for ordinal, q in questions.items()},
    }


@dataclass(frozen=True)
class SubjectCohort:
    """One subject's synthetic corpus with its planted ground truth."""

    course: Course
    assignment: Assignment
    question: Question
    submissions: tuple[Submission, ...]
    fixture: dict[str, Any]
    # submission id -> the selection an honest reviewer would arrive at
    truth: dict[str, frozenset[str]]
    planted_high_correct: int
    high_count: int


ACCURACY_TARGETS: dict[str, Fraction] = {
    "CS": Fraction(958, 1000),
    "Math": Fraction(935, 1000),
    "Physics": Fraction(945, 1000),
    "Chemistry": Fraction(975, 1000),
}

_TRUTH_CYCLE: tuple[frozenset[str], ...] = (
    frozenset(),
    frozenset({"a"}),
    frozenset({"b"}),
    frozenset({"a", "b"}),
)


def build_subject_cohort(
    subject: str,
    high_rate: Fraction,
    n_high: int = 2000,
    n_medium: int = 200,
    n_low: int = 200,
    seed: int = 0,
) -> SubjectCohort:
    """A one-question course where exactly round(high_rate * n_high) of the
    high-confidence machine grades match the planted truth.

    Medium and low tiers alternate correct and incorrect so every tier is
    exercised without affecting the high-confidence measurement.
    """
    course_id = derived_id("course", f"{subject} Cohort", subject)
    assignment_id = derived_id("assignment", course_id, "Final")
    question_id = derived_id("question", assignment_id, "1")
    rubric = Rubric(
        question_id=question_id,
        scheme=RubricScheme.SUBTRACTIVE,
        items=(
            RubricItem(id="a", label="Missing case analysis", points=Fraction(-2)),
            RubricItem(id="b", label="Arithmetic slip", points=Fraction(-1)),
        ),
        base_points=Fraction(4),
        min_total=Fraction(0),
        max_total=Fraction(4),
    )
    question = Question(
        id=question_id,
        assignment_id=assignment_id,
        ordinal=1,
        format=QuestionFormat.TEXT_CODE,
        statement=f"{subject} final question",
        reference_solution="reference",
        rubric=rubric,
    )

    total = n_high + n_medium + n_low
    correct_high = round(high_rate * n_high)
    rng = random.Random(seed)
    correct_indices = set(rng.sample(range(n_high), correct_high))

    roster = []
    submissions = []
    responses: dict[str, Any] = {}
    pages: dict[str, str] = {}
    truth: dict[str, frozenset[str]] = {}
    region = PageRegion(page_index=0, x0=0.1, y0=0.2, x1=0.9, y1=0.9)
    for index in range(total):
        student_id = f"{subject.lower()}-{index:04d}"
        student = StudentRef(id=student_id, display_name=f"{subject} Student {index:04d}")
        roster.append(student)
        page = f"{subject.lower()}-page-{index:04d}.png"
        submission = Submission(
            id=derived_id("submission", assignment_id, str(index)),
            assignment_id=assignment_id,
            pages=(page,),
            student=student,
            region_map={question_id: region},
        )
        submissions.append(submission)
        pages[page] = student_id

        truth_selection = _TRUTH_CYCLE[index % len(_TRUTH_CYCLE)]
        if index < n_high:
            tier = "high"
            correct = index in correct_indices
        elif index < n_high + n_medium:
            tier = "medium"
            correct = index % 2 == 0
        else:
            tier = "low"
            correct = index % 2 == 0
        machine = truth_selection if correct else truth_selection ^ frozenset({"a"})
        truth[submission.id] = truth_selection
        responses[student_id] = {
            "text": f"{subject} response {index:04d}",
            "transcription_confidence": "high",
            "pre": {"selected": sorted(machine), "confidence": tier},
            "post": {"selected": sorted(machine), "confidence": tier},
        }

    course = Course(
        id=course_id, name=f"{subject} Cohort", roster=tuple(roster), subject=subject
    )
    assignment = Assignment(id=assignment_id, course_id=course_id, title="Final")
    fixture = {"names": {}, "pages": pages, "responses": {question_id: responses}}
    return SubjectCohort(
        course=course,
        assignment=assignment,
        question=question,
        submissions=tuple(submissions),
        fixture=fixture,
        truth=truth,
        planted_high_correct=correct_high,
        high_count=n_high,
    )


def merge_fixtures(*fixtures: dict[str, Any]) -> dict[str, Any]:
    merged: dict[str, Any] = {"names": {}, "pages": {}, "responses": {}}
    for fixture in fixtures:
        merged["names"].update(fixture.get("names", {}))
        merged["pages"].update(fixture.get("pages", {}))
        for question_id, rows in fixture.get("responses", {}).items():
            merged["responses"].setdefault(question_id, {}).update(rows)
    return merged
