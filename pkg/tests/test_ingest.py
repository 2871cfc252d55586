"""Scan intake: manifest splitting and name-based student matching."""

import pytest

from gradeloop.errors import AlreadyMatched, EmptyRoster, PageCountMismatch, ValidationFailed
from gradeloop.ingest import (
    AUTO_MATCH_THRESHOLD,
    CANDIDATE_THRESHOLD,
    MatchResult,
    MatchStatus,
    SubmissionMatcher,
    UploadManifest,
    levenshtein,
    match_student,
    name_similarity,
    resolve_match,
    split_submissions,
)
from gradeloop.model import PageRegion, Question, QuestionFormat, StudentRef, Submission
from gradeloop.provider import MockBackend, ProviderGateway

from conftest import make_text_question

NAME_REGION = PageRegion(page_index=0, x0=0.0, y0=0.0, x1=1.0, y1=0.15)
ANSWER_REGION = PageRegion(page_index=1, x0=0.1, y0=0.1, x1=0.9, y1=0.9)

ROSTER = (
    StudentRef(id="s1", display_name="Alice Zhang"),
    StudentRef(id="s2", display_name="Brian Okafor"),
    StudentRef(id="s3", display_name="Carmen Diaz"),
)


def make_manifest(n_submissions: int = 2) -> UploadManifest:
    files = tuple(
        f"scan-{i:03d}.png" for i in range(2 * n_submissions)
    )
    return UploadManifest(
        assignment_id="a1",
        files=files,
        template_pages=2,
        layout={1: ANSWER_REGION},
        name_region=NAME_REGION,
        mc_responses={"0": {"1": ("A",)}},
    )


def name_gateway(text: str, confidence: str = "high") -> ProviderGateway:
    fixture = {"names": {"p0.png": {"text": text, "confidence": confidence}}}
    return ProviderGateway(MockBackend(fixture), backoff_seconds=0, retries=1)


def named_submission() -> Submission:
    return Submission(
        id="sub-1",
        assignment_id="a1",
        pages=("p0.png", "p1.png"),
        name_region=NAME_REGION,
    )


class TestManifest:
    def test_round_trip(self):
        manifest = make_manifest()
        assert UploadManifest.from_dict(manifest.to_dict()) == manifest

    def test_layout_must_stay_inside_template(self):
        with pytest.raises(ValueError):
            UploadManifest(
                assignment_id="a1",
                files=("f0.png",),
                template_pages=1,
                layout={1: ANSWER_REGION},  # page_index 1 past a 1-page template
                name_region=NAME_REGION,
            )

    def test_name_region_must_stay_inside_template(self):
        with pytest.raises(ValueError):
            UploadManifest(
                assignment_id="a1",
                files=("f0.png",),
                template_pages=1,
                layout={},
                name_region=PageRegion(page_index=3, x0=0, y0=0, x1=1, y1=1),
            )


class TestSplitSubmissions:
    def questions(self) -> list[Question]:
        mc = Question(
            id="q-mc", assignment_id="a1", ordinal=1,
            format=QuestionFormat.SSMC, statement="Pick.",
            options=("A", "B"), answer_key=frozenset({"A"}),
            points=__import__("fractions").Fraction(1),
        )
        return [mc]

    def test_splits_pages_into_template_sized_groups(self):
        submissions = split_submissions(make_manifest(3), self.questions())
        assert [s.pages for s in submissions] == [
            ("scan-000.png", "scan-001.png"),
            ("scan-002.png", "scan-003.png"),
            ("scan-004.png", "scan-005.png"),
        ]

    def test_submission_ids_are_stable_across_calls(self):
        first = split_submissions(make_manifest(2), self.questions())
        second = split_submissions(make_manifest(2), self.questions())
        assert [s.id for s in first] == [s.id for s in second]

    def test_page_count_mismatch_rejected(self):
        manifest = make_manifest(2)
        broken = UploadManifest.from_dict({**manifest.to_dict(), "files": list(manifest.files[:3])})
        with pytest.raises(PageCountMismatch):
            split_submissions(broken, self.questions())

    def test_layout_keys_resolve_to_question_ids(self):
        submissions = split_submissions(make_manifest(1), self.questions())
        assert set(submissions[0].region_map) == {"q-mc"}

    def test_unknown_layout_ordinal_rejected(self):
        manifest = make_manifest(1)
        other = [make_text_question()]  # ordinal 1 but used below with empty layout match
        broken = UploadManifest.from_dict({**manifest.to_dict(), "layout": {"7": ANSWER_REGION.to_dict()}})
        with pytest.raises(ValidationFailed):
            split_submissions(broken, other)

    def test_mc_responses_keyed_by_question_id(self):
        submissions = split_submissions(make_manifest(2), self.questions())
        assert submissions[0].mc_responses == {"q-mc": frozenset({"A"})}
        assert submissions[1].mc_responses == {}

    def test_unknown_mc_ordinal_rejected(self):
        manifest = make_manifest(1)
        broken = UploadManifest.from_dict(
            {**manifest.to_dict(), "mc_responses": {"0": {"9": ["A"]}}}
        )
        with pytest.raises(ValidationFailed):
            split_submissions(broken, self.questions())


class TestNameSimilarity:
    # oracle distances hand-checked with a reference Wagner-Fischer table
    @pytest.mark.parametrize(
        "a,b,distance",
        [("alcezhang", "alicezhang", 1), ("kitten", "sitting", 3), ("", "abc", 3), ("same", "same", 0)],
    )
    def test_levenshtein_known_values(self, a, b, distance):
        assert levenshtein(a, b) == distance

    def test_similarity_known_value(self):
        assert name_similarity("Alce Zhang", "Alice Zhang") == pytest.approx(0.9)

    def test_similarity_ignores_case_and_spacing(self):
        assert name_similarity("alice  ZHANG", "Alice Zhang") == 1.0

    def test_similarity_of_unrelated_names_is_low(self):
        assert name_similarity("Bob Smith", "Alice Zhang") == 0.0

    def test_thresholds_are_the_documented_defaults(self):
        assert AUTO_MATCH_THRESHOLD == 0.8
        assert CANDIDATE_THRESHOLD == 0.5


class TestMatchStudent:
    def test_close_name_auto_matches(self):
        result = match_student(named_submission(), ROSTER, name_gateway("Alce Zhang"))
        assert result.status is MatchStatus.AUTO_MATCHED
        assert result.candidate == ROSTER[0]
        assert result.match_score == pytest.approx(0.9)

    def test_borderline_name_needs_review(self):
        result = match_student(named_submission(), ROSTER, name_gateway("Alicia Chang"))
        assert result.status is MatchStatus.NEEDS_REVIEW
        assert result.candidate == ROSTER[0]

    def test_threshold_boundary_is_inclusive(self):
        # "Cermen Daz" scores exactly 0.8 against Carmen Diaz
        result = match_student(named_submission(), ROSTER, name_gateway("Cermen Daz"))
        assert result.match_score == pytest.approx(0.8)
        assert result.status is MatchStatus.AUTO_MATCHED

    def test_distant_name_is_unmatched(self):
        result = match_student(named_submission(), ROSTER, name_gateway("Bob Smith"))
        assert result.status is MatchStatus.UNMATCHED
        assert result.candidate is None

    def test_tie_is_never_auto_matched(self):
        roster = (
            StudentRef(id="s1", display_name="Jan Kowalski"),
            StudentRef(id="s2", display_name="Jan Kowalsky"),
        )
        result = match_student(named_submission(), roster, name_gateway("Jan Kowalsk"))
        assert result.status is MatchStatus.NEEDS_REVIEW
        assert result.candidate is not None and result.candidate.id == "s1"

    def test_missing_name_region_is_unmatched(self):
        submission = Submission(id="sub-2", assignment_id="a1", pages=("p0.png",))
        result = match_student(submission, ROSTER, name_gateway("Alice Zhang"))
        assert result.status is MatchStatus.UNMATCHED

    def test_transcription_outage_is_unmatched(self):
        gateway = ProviderGateway(MockBackend({"names": {}}), backoff_seconds=0, retries=1)
        result = match_student(named_submission(), ROSTER, gateway)
        assert result.status is MatchStatus.UNMATCHED

    def test_empty_roster_raises(self):
        with pytest.raises(EmptyRoster):
            match_student(named_submission(), (), name_gateway("Alice Zhang"))


class TestReservationRule:
    def test_second_claim_on_one_student_is_downgraded(self):
        fixture = {
            "names": {
                "p0.png": {"text": "Alice Zhang", "confidence": "high"},
                "p2.png": {"text": "Alice Zhang", "confidence": "high"},
            }
        }
        gateway = ProviderGateway(MockBackend(fixture), backoff_seconds=0, retries=1)
        matcher = SubmissionMatcher(gateway)
        first = Submission(
            id="sub-1", assignment_id="a1", pages=("p0.png",), name_region=NAME_REGION
        )
        second = Submission(
            id="sub-2", assignment_id="a1", pages=("p2.png",), name_region=NAME_REGION
        )
        assert matcher.match(first, ROSTER).status is MatchStatus.AUTO_MATCHED
        downgraded = matcher.match(second, ROSTER)
        assert downgraded.status is MatchStatus.NEEDS_REVIEW
        assert downgraded.candidate == ROSTER[0]

    def test_same_submission_may_retry_its_own_claim(self):
        fixture = {"names": {"p0.png": {"text": "Alice Zhang", "confidence": "high"}}}
        gateway = ProviderGateway(MockBackend(fixture), backoff_seconds=0, retries=1)
        matcher = SubmissionMatcher(gateway)
        submission = Submission(
            id="sub-1", assignment_id="a1", pages=("p0.png",), name_region=NAME_REGION
        )
        assert matcher.match(submission, ROSTER).status is MatchStatus.AUTO_MATCHED
        assert matcher.match(submission, ROSTER).status is MatchStatus.AUTO_MATCHED


class TestResolveMatch:
    def test_binds_student_and_finalizes(self):
        submission = named_submission()
        current = MatchResult(submission.id, ROSTER[0], 0.7, MatchStatus.NEEDS_REVIEW)
        bound, result = resolve_match(submission, current, ROSTER[1], ROSTER)
        assert bound.student == ROSTER[1]
        assert result.status is MatchStatus.RESOLVED

    def test_auto_matched_cannot_be_rebound(self):
        submission = named_submission()
        current = MatchResult(submission.id, ROSTER[0], 0.9, MatchStatus.AUTO_MATCHED)
        with pytest.raises(AlreadyMatched):
            resolve_match(submission, current, ROSTER[1], ROSTER)

    def test_resolved_cannot_be_rebound(self):
        submission = named_submission().with_student(ROSTER[0])
        current = MatchResult(submission.id, ROSTER[0], 0.7, MatchStatus.RESOLVED)
        with pytest.raises(AlreadyMatched):
            resolve_match(submission, current, ROSTER[1], ROSTER)

    def test_student_must_be_on_roster(self):
        submission = named_submission()
        current = MatchResult(submission.id, None, 0.0, MatchStatus.UNMATCHED)
        stranger = StudentRef(id="zz", display_name="Zo Zo")
        with pytest.raises(ValidationFailed):
            resolve_match(submission, current, stranger, ROSTER)
