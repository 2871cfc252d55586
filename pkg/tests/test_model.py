"""Domain entities: ids, round-trips, validation, region resolution."""

from fractions import Fraction

import pytest

from gradeloop.model import (
    Assignment,
    ConfidenceTier,
    Course,
    ImageRegion,
    PageRegion,
    Question,
    QuestionFormat,
    StudentRef,
    Submission,
    derived_id,
    new_id,
    validate_question,
)
from gradeloop.rubric import Rubric, RubricItem, RubricScheme

from conftest import make_rubric, make_submission, make_text_question


class TestIds:
    def test_derived_id_is_deterministic(self):
        assert derived_id("course", "CS 101") == derived_id("course", "CS 101")

    def test_derived_id_discriminates_kind_and_parts(self):
        assert derived_id("course", "x") != derived_id("assignment", "x")
        assert derived_id("course", "a", "b") != derived_id("course", "ab")

    def test_new_id_is_unique(self):
        assert new_id() != new_id()


class TestConfidenceTier:
    def test_total_order(self):
        assert ConfidenceTier.LOW < ConfidenceTier.MEDIUM < ConfidenceTier.HIGH
        assert ConfidenceTier.HIGH >= ConfidenceTier.HIGH

    def test_rank_values(self):
        assert [t.rank for t in (ConfidenceTier.LOW, ConfidenceTier.MEDIUM, ConfidenceTier.HIGH)] == [0, 1, 2]


class TestRoundTrips:
    def test_course_round_trip(self):
        course = Course(
            id="c1",
            name="Intro",
            roster=(StudentRef(id="s1", display_name="Ada"),),
            subject="CS",
        )
        assert Course.from_dict(course.to_dict()) == course

    def test_course_rejects_duplicate_roster_ids(self):
        with pytest.raises(ValueError):
            Course(
                id="c1",
                name="Intro",
                roster=(
                    StudentRef(id="s1", display_name="Ada"),
                    StudentRef(id="s1", display_name="Another Ada"),
                ),
            )

    def test_assignment_round_trip(self):
        assignment = Assignment(id="a1", course_id="c1", title="Midterm")
        assert Assignment.from_dict(assignment.to_dict()) == assignment

    def test_question_round_trip_with_rubric(self):
        question = make_text_question()
        assert Question.from_dict(question.to_dict()) == question

    def test_mc_question_round_trip(self):
        question = Question(
            id="q-mc",
            assignment_id="a1",
            ordinal=2,
            format=QuestionFormat.MSMC,
            statement="Pick all that apply.",
            options=("A", "B", "C"),
            answer_key=frozenset({"A", "C"}),
            points=Fraction(3, 2),
        )
        assert Question.from_dict(question.to_dict()) == question

    def test_submission_round_trip(self):
        submission = make_submission(1)
        assert Submission.from_dict(submission.to_dict()) == submission


class TestPageRegion:
    def test_rejects_out_of_unit_coordinates(self):
        with pytest.raises(ValueError):
            PageRegion(page_index=0, x0=-0.1, y0=0, x1=1, y1=1)

    def test_rejects_inverted_rectangle(self):
        with pytest.raises(ValueError):
            PageRegion(page_index=0, x0=0.9, y0=0, x1=0.1, y1=1)

    def test_rejects_negative_page(self):
        with pytest.raises(ValueError):
            PageRegion(page_index=-1, x0=0, y0=0, x1=1, y1=1)


class TestRegionResolution:
    def test_resolve_region_maps_page_index_to_file(self):
        submission = make_submission(3)
        region = submission.resolve_region("q-text")
        assert isinstance(region, ImageRegion)
        assert region.page == "page-003.png"
        assert (region.x0, region.y1) == (0.1, 0.8)

    def test_resolve_region_unknown_question(self):
        assert make_submission(3).resolve_region("q-other") is None

    def test_resolve_name_region(self):
        submission = Submission(
            id="sub-1",
            assignment_id="a1",
            pages=("p0.png", "p1.png"),
            name_region=PageRegion(page_index=1, x0=0.0, y0=0.0, x1=1.0, y1=0.2),
        )
        region = submission.resolve_name_region()
        assert region is not None and region.page == "p1.png"

    def test_resolve_name_region_absent(self):
        assert make_submission(1).resolve_name_region() is None


class TestValidateQuestion:
    def test_valid_text_question(self):
        assert validate_question(make_text_question()).ok

    def test_text_question_needs_rubric_for_grading(self):
        bare = Question(
            id="q1", assignment_id="a1", ordinal=1,
            format=QuestionFormat.TEXT_CODE, statement="Explain.",
        )
        assert not validate_question(bare).ok
        assert validate_question(bare, for_grading=False).ok

    def test_rubric_must_be_bound_to_the_question(self):
        question = make_text_question(rubric=make_rubric(question_id="q-other"))
        report = validate_question(question)
        assert "different question" in report.violations[0]

    def test_ssmc_key_must_be_single(self):
        question = Question(
            id="q1", assignment_id="a1", ordinal=1,
            format=QuestionFormat.SSMC, statement="Pick one.",
            options=("A", "B"), answer_key=frozenset({"A", "B"}), points=Fraction(1),
        )
        assert not validate_question(question).ok

    def test_mc_key_must_use_declared_options(self):
        question = Question(
            id="q1", assignment_id="a1", ordinal=1,
            format=QuestionFormat.MSMC, statement="Pick.",
            options=("A", "B"), answer_key=frozenset({"Z"}), points=Fraction(1),
        )
        report = validate_question(question)
        assert any("declared options" in v for v in report.violations)

    def test_mc_needs_positive_points(self):
        question = Question(
            id="q1", assignment_id="a1", ordinal=1,
            format=QuestionFormat.SSMC, statement="Pick.",
            options=("A", "B"), answer_key=frozenset({"A"}), points=Fraction(0),
        )
        assert not validate_question(question).ok

    def test_text_question_must_not_carry_answer_key(self):
        question = Question(
            id="q1", assignment_id="a1", ordinal=1,
            format=QuestionFormat.TEXT_CODE, statement="Explain.",
            answer_key=frozenset({"A"}), rubric=make_rubric(question_id="q1"),
        )
        assert not validate_question(question).ok

    def test_ordinal_must_be_one_based(self):
        question = Question(
            id="q1", assignment_id="a1", ordinal=0,
            format=QuestionFormat.TEXT_CODE, statement="Explain.",
            rubric=make_rubric(question_id="q1"),
        )
        assert not validate_question(question).ok
