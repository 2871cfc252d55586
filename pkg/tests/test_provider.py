"""Provider gateway contract: caching, retries, validation, and the
deterministic fixture-driven mock backend."""

from fractions import Fraction

import pytest

from gradeloop.errors import MalformedProviderOutput, ProviderUnavailable
from gradeloop.model import ConfidenceTier, ImageRegion, TranscriptionConfidence
from gradeloop.provider import (
    MockBackend,
    ProviderCapability,
    ProviderGateway,
    ProviderRequest,
    ProviderTranscription,
    WisdomDraft,
)
from gradeloop.rubric import RubricScheme, validate_rubric

from conftest import make_rubric, make_text_question


class ScriptedBackend:
    """Replays a fixed sequence of responses or exceptions."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []

    def execute(self, request):
        self.requests.append(request)
        event = self.script.pop(0)
        if isinstance(event, Exception):
            raise event
        return event


def transcription(text: str = "an answer") -> ProviderTranscription:
    return ProviderTranscription(text=text, confidence=TranscriptionConfidence.HIGH)


GRADE_DOC = {"selected_item_ids": ["e1"], "confidence": "high", "rationale": "fits"}


class TestRequestBuild:
    def test_key_is_content_addressed(self):
        a = ProviderRequest.build(ProviderCapability.GRADE, {"x": 1})
        b = ProviderRequest.build(ProviderCapability.GRADE, {"x": 1})
        c = ProviderRequest.build(ProviderCapability.GRADE, {"x": 2})
        assert a.idempotency_key == b.idempotency_key
        assert a.idempotency_key != c.idempotency_key

    def test_capability_discriminates_key(self):
        a = ProviderRequest.build(ProviderCapability.GRADE, {"x": 1})
        b = ProviderRequest.build(ProviderCapability.SUMMARIZE, {"x": 1})
        assert a.idempotency_key != b.idempotency_key


class TestGatewayCore:
    def test_identical_requests_hit_the_cache(self, subtractive_rubric):
        backend = ScriptedBackend([GRADE_DOC])
        gateway = ProviderGateway(backend, backoff_seconds=0)
        question = make_text_question()
        first = gateway.grade(transcription(), question, subtractive_rubric)
        second = gateway.grade(transcription(), question, subtractive_rubric)
        assert first == second
        assert len(backend.requests) == 1
        assert gateway.calls["grade"] == 1
        assert gateway.cache_hits == 1

    def test_retries_transient_unavailability(self, subtractive_rubric):
        backend = ScriptedBackend(
            [ProviderUnavailable("down"), ProviderUnavailable("down"), GRADE_DOC]
        )
        gateway = ProviderGateway(backend, retries=3, backoff_seconds=0)
        result = gateway.grade(transcription(), make_text_question(), subtractive_rubric)
        assert result.selected_item_ids == frozenset({"e1"})
        assert gateway.calls["grade"] == 3

    def test_retry_budget_exhausted_raises(self, subtractive_rubric):
        backend = ScriptedBackend([ProviderUnavailable("down")] * 3)
        gateway = ProviderGateway(backend, retries=3, backoff_seconds=0)
        with pytest.raises(ProviderUnavailable):
            gateway.grade(transcription(), make_text_question(), subtractive_rubric)

    def test_malformed_output_is_not_retried(self, subtractive_rubric):
        backend = ScriptedBackend([{"confidence": "high"}, GRADE_DOC])
        gateway = ProviderGateway(backend, retries=3, backoff_seconds=0)
        with pytest.raises(MalformedProviderOutput):
            gateway.grade(transcription(), make_text_question(), subtractive_rubric)
        assert len(backend.requests) == 1

    def test_grade_rejects_items_outside_the_rubric(self, subtractive_rubric):
        doc = {"selected_item_ids": ["e1", "ghost"], "confidence": "high"}
        gateway = ProviderGateway(ScriptedBackend([doc]), backoff_seconds=0)
        with pytest.raises(MalformedProviderOutput) as err:
            gateway.grade(transcription(), make_text_question(), subtractive_rubric)
        assert "ghost" in str(err.value)

    def test_grade_accepts_wisdom_mappings_and_objects(self, subtractive_rubric):
        backend = ScriptedBackend([GRADE_DOC, GRADE_DOC])
        gateway = ProviderGateway(backend, backoff_seconds=0)
        question = make_text_question()
        gateway.grade(
            transcription(), question, subtractive_rubric, [{"id": "w1", "text": "note"}]
        )

        class W:
            id = "w1"
            text = "note"

        gateway.grade(transcription("other"), question, subtractive_rubric, [W()])
        for request in backend.requests:
            assert request.payload["wisdoms"] == [{"id": "w1", "text": "note"}]

    def test_grade_payload_embeds_full_rubric_and_transcription(self, subtractive_rubric):
        backend = ScriptedBackend([GRADE_DOC])
        gateway = ProviderGateway(backend, backoff_seconds=0)
        gateway.grade(transcription("the text"), make_text_question(), subtractive_rubric)
        payload = backend.requests[0].payload
        assert payload["transcription"] == {"text": "the text", "confidence": "high"}
        assert payload["rubric"] == subtractive_rubric.to_dict()

    def test_transcribe_malformed_document(self, region):
        gateway = ProviderGateway(ScriptedBackend([{"text": "hi"}]), backoff_seconds=0)
        with pytest.raises(MalformedProviderOutput):
            gateway.transcribe(region)

    def test_synthesize_requires_discrepancies(self, subtractive_rubric):
        gateway = ProviderGateway(ScriptedBackend([]), backoff_seconds=0)
        with pytest.raises(ValueError):
            gateway.synthesize_wisdoms([], subtractive_rubric)

    def test_synthesize_rejects_sourceless_drafts(self, subtractive_rubric):
        from gradeloop.calibration import Discrepancy

        doc = {"wisdoms": [{"item_id": "e1", "text": "note", "source_discrepancy_ids": []}]}
        gateway = ProviderGateway(ScriptedBackend([doc]), backoff_seconds=0)
        disc = Discrepancy(
            record_id="r1", added_item_ids=frozenset({"e1"}), removed_item_ids=frozenset()
        )
        with pytest.raises(MalformedProviderOutput):
            gateway.synthesize_wisdoms([disc], subtractive_rubric)

    def test_synthesize_rejects_empty_response(self, subtractive_rubric):
        from gradeloop.calibration import Discrepancy

        gateway = ProviderGateway(ScriptedBackend([{"wisdoms": []}]), backoff_seconds=0)
        disc = Discrepancy(
            record_id="r1", added_item_ids=frozenset({"e1"}), removed_item_ids=frozenset()
        )
        with pytest.raises(MalformedProviderOutput):
            gateway.synthesize_wisdoms([disc], subtractive_rubric)


FIXTURE = {
    "names": {
        "page-0.png": {"text": "Ada Lovelace", "confidence": "high"},
        "page-1.png": {"text": "??", "confidence": "low"},
    },
    "pages": {"page-0.png": "s01", "page-1.png": "s02"},
    "responses": {
        "q-text": {
            "s01": {
                "text": "loop ends",
                "transcription_confidence": "high",
                "pre": {"selected": ["e1"], "confidence": "medium"},
                "post": {"selected": [], "confidence": "high"},
            },
            "s02": {
                "text": "unreadable",
                "transcription_confidence": "low",
                "grade_fail": True,
            },
        }
    },
}


class TestMockBackend:
    def gateway(self) -> ProviderGateway:
        return ProviderGateway(MockBackend(FIXTURE), backoff_seconds=0, retries=1)

    def test_name_transcription_without_question_context(self):
        result = self.gateway().transcribe(ImageRegion(page="page-0.png"))
        assert result.text == "Ada Lovelace"
        assert result.confidence is TranscriptionConfidence.HIGH

    def test_answer_transcription_resolves_page_to_student_row(self):
        result = self.gateway().transcribe(
            ImageRegion(page="page-0.png"), context=make_text_question()
        )
        assert result.text == "loop ends"

    def test_unknown_page_is_unavailable(self):
        with pytest.raises(ProviderUnavailable):
            self.gateway().transcribe(ImageRegion(page="missing.png"))

    def test_pre_and_post_wisdom_variants(self, subtractive_rubric):
        gateway = self.gateway()
        question = make_text_question()
        pre = gateway.grade(transcription("loop ends"), question, subtractive_rubric)
        assert pre.selected_item_ids == frozenset({"e1"})
        assert pre.confidence is ConfidenceTier.MEDIUM
        post = gateway.grade(
            transcription("loop ends"),
            question,
            subtractive_rubric,
            [{"id": "w1", "text": "be lenient"}],
        )
        assert post.selected_item_ids == frozenset()
        assert post.confidence is ConfidenceTier.HIGH

    def test_grade_fail_row_raises_unavailable(self, subtractive_rubric):
        with pytest.raises(ProviderUnavailable):
            self.gateway().grade(
                transcription("unreadable"), make_text_question(), subtractive_rubric
            )

    def test_malformed_row_fails_subset_check(self, subtractive_rubric):
        fixture = {
            "responses": {
                "q-text": {"s01": {"text": "bad row", "malformed": True}}
            }
        }
        gateway = ProviderGateway(MockBackend(fixture), backoff_seconds=0, retries=1)
        with pytest.raises(MalformedProviderOutput):
            gateway.grade(transcription("bad row"), make_text_question(), subtractive_rubric)

    def test_summary_and_feedback_templates(self, subtractive_rubric):
        gateway = self.gateway()
        assert gateway.summarize([], "text", subtractive_rubric).startswith("No errors")
        assert "error e1" in gateway.summarize(["error e1"], "text", subtractive_rubric)
        assert "Score: 3" in gateway.feedback(["error e1"], "3")
        assert gateway.feedback([], "5", "be kind").endswith("[be kind]")

    def test_default_rubric_proposal_is_valid(self):
        gateway = self.gateway()
        for scheme in (RubricScheme.SUBTRACTIVE, RubricScheme.ADDITIVE):
            from gradeloop.rubric import build_rubric_proposal_request

            request = build_rubric_proposal_request(
                make_text_question(), scheme=scheme, point_budget=Fraction(10)
            )
            draft = gateway.propose_rubric(request)
            assert validate_rubric(draft).ok
            assert draft.scheme is scheme

    def test_fixture_rubric_override(self):
        fixture = {"rubrics": {"q-text": make_rubric().to_dict()}}
        gateway = ProviderGateway(MockBackend(fixture), backoff_seconds=0, retries=1)
        from gradeloop.rubric import build_rubric_proposal_request

        draft = gateway.propose_rubric(build_rubric_proposal_request(make_text_question()))
        assert draft == make_rubric()

    def test_synthesize_one_wisdom_per_item(self, subtractive_rubric):
        from gradeloop.calibration import Discrepancy

        gateway = self.gateway()
        drafts = gateway.synthesize_wisdoms(
            [
                Discrepancy("r1", frozenset({"e1"}), frozenset({"e2"})),
                Discrepancy("r2", frozenset({"e1"}), frozenset()),
            ],
            subtractive_rubric,
        )
        assert [d.item_id for d in drafts] == ["e1", "e2"]
        by_item = {d.item_id: d for d in drafts}
        assert by_item["e1"].source_discrepancy_ids == ("r1", "r2")
        assert by_item["e2"].source_discrepancy_ids == ("r1",)
        assert all(isinstance(d, WisdomDraft) and d.text for d in drafts)
