"""Grading pipeline: transcribe, grade, score, and summarize submissions.

One grading run covers one question across a batch of submissions.
Multiple-choice formats are scored locally without any provider call;
drawing responses go straight to the manual queue; free-response text and
code go through the provider for transcription and rubric selection, with
the final score always recomputed locally from the rubric.

Records are keyed by (question, submission) so a regrade updates the same
record in place. Records already reviewed by a human are never altered by
a regrade.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Mapping, Sequence

from .canon import frac_from_str, frac_to_str
from .errors import (
    GradingError,
    MalformedProviderOutput,
    ProviderUnavailable,
    RunAlreadyActive,
    RunNotCompleted,
    ValidationFailed,
)
from .mc import McResponse, MsmcPolicy, grade_msmc, grade_ssmc
from .model import (
    ConfidenceTier,
    Question,
    QuestionFormat,
    Submission,
    TranscriptionConfidence,
    derived_id,
)
from .provider import ProviderGateway, ProviderTranscription
from .rubric import RubricSelection, compute_score, no_response_score
from .store import DocumentStore

if TYPE_CHECKING:
    from .review import ConfidencePolicy

RECORD_KIND = "grade_record"
RUN_KIND = "grading_run"


class RecordStatus(str, Enum):
    AI_PROPOSED = "ai_proposed"
    NEEDS_REVIEW = "needs_review"
    REVIEWED = "reviewed"
    MANUAL_QUEUE = "manual_queue"


class Provenance(str, Enum):
    AI = "ai"
    HUMAN = "human"
    AI_THEN_HUMAN = "ai_then_human"


class RunState(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass(frozen=True)
class TranscriptionRecord:
    text: str
    confidence: str  # "low" | "high"
    verified_by_human: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "confidence": self.confidence,
            "verified_by_human": self.verified_by_human,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "TranscriptionRecord":
        return TranscriptionRecord(
            text=data["text"],
            confidence=data["confidence"],
            verified_by_human=data["verified_by_human"],
        )

    def as_provider_input(self) -> ProviderTranscription:
        return ProviderTranscription(
            text=self.text, confidence=TranscriptionConfidence(self.confidence)
        )


@dataclass(frozen=True)
class GradeRecord:
    """The grading outcome for one (question, submission) pair."""

    id: str
    question_id: str
    submission_id: str
    status: RecordStatus
    provenance: Provenance
    score: Fraction
    selection: frozenset[str] = frozenset()
    confidence: ConfidenceTier | None = None
    transcription: TranscriptionRecord | None = None
    summary: str = ""
    comments: tuple[str, ...] = ()
    is_blank: bool = False
    mc_chosen: tuple[str, ...] | None = None
    failure: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question_id": self.question_id,
            "submission_id": self.submission_id,
            "status": self.status.value,
            "provenance": self.provenance.value,
            "score": frac_to_str(self.score),
            "selection": sorted(self.selection),
            "confidence": self.confidence.value if self.confidence else None,
            "transcription": self.transcription.to_dict() if self.transcription else None,
            "summary": self.summary,
            "comments": list(self.comments),
            "is_blank": self.is_blank,
            "mc_chosen": list(self.mc_chosen) if self.mc_chosen is not None else None,
            "failure": self.failure,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "GradeRecord":
        return GradeRecord(
            id=data["id"],
            question_id=data["question_id"],
            submission_id=data["submission_id"],
            status=RecordStatus(data["status"]),
            provenance=Provenance(data["provenance"]),
            score=frac_from_str(data["score"]),
            selection=frozenset(data["selection"]),
            confidence=ConfidenceTier(data["confidence"]) if data["confidence"] else None,
            transcription=(
                TranscriptionRecord.from_dict(data["transcription"])
                if data["transcription"]
                else None
            ),
            summary=data["summary"],
            comments=tuple(data["comments"]),
            is_blank=data["is_blank"],
            mc_chosen=tuple(data["mc_chosen"]) if data["mc_chosen"] is not None else None,
            failure=data.get("failure"),
        )


def record_id_for(question_id: str, submission_id: str) -> str:
    return derived_id("grade-record", question_id, submission_id)


def assert_score_consistent(record: GradeRecord, question: Question) -> None:
    """Check the stored score against a local recomputation.

    Skipped for manual-queue records (no machine grade exists) and for
    multiple-choice records, whose score is fixed at creation from the
    answer key rather than a rubric selection.
    """
    if record.status is RecordStatus.MANUAL_QUEUE:
        return
    if record.provenance is Provenance.HUMAN:
        # Graded by hand from scratch; there is no machine selection to check.
        return
    rubric = question.rubric
    if rubric is None:
        return
    if record.is_blank:
        expected = no_response_score(rubric)
    else:
        expected = compute_score(
            rubric, RubricSelection(grade_record_id=record.id, selected_item_ids=record.selection)
        )
    if record.score != expected:
        raise ValidationFailed(
            f"record {record.id}: stored score {record.score} does not match"
            f" recomputed score {expected}"
        )


@dataclass(frozen=True)
class GradingRun:
    id: str
    question_id: str
    assignment_id: str
    sequence: int
    state: RunState
    total: int
    pending: int
    done: int
    failed: int
    wisdom_snapshot: tuple[dict[str, str], ...] = ()
    record_ids: tuple[str, ...] = ()
    msmc_policy: MsmcPolicy = MsmcPolicy.EXACT_MATCH
    regrade_of: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question_id": self.question_id,
            "assignment_id": self.assignment_id,
            "sequence": self.sequence,
            "state": self.state.value,
            "total": self.total,
            "pending": self.pending,
            "done": self.done,
            "failed": self.failed,
            "wisdom_snapshot": [dict(w) for w in self.wisdom_snapshot],
            "record_ids": list(self.record_ids),
            "msmc_policy": self.msmc_policy.value,
            "regrade_of": self.regrade_of,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "GradingRun":
        return GradingRun(
            id=data["id"],
            question_id=data["question_id"],
            assignment_id=data["assignment_id"],
            sequence=data["sequence"],
            state=RunState(data["state"]),
            total=data["total"],
            pending=data["pending"],
            done=data["done"],
            failed=data["failed"],
            wisdom_snapshot=tuple(dict(w) for w in data["wisdom_snapshot"]),
            record_ids=tuple(data["record_ids"]),
            msmc_policy=MsmcPolicy(data["msmc_policy"]),
            regrade_of=data.get("regrade_of"),
        )


def _snapshot_wisdoms(wisdoms: Sequence[Any]) -> tuple[dict[str, str], ...]:
    """Freeze (id, text) of the active wisdoms so later edits cannot leak in."""
    frozen = []
    for wisdom in wisdoms:
        if getattr(wisdom, "active", True):
            frozen.append({"id": wisdom.id, "text": wisdom.text})
    return tuple(frozen)


# Review requirement per tier when no policy is supplied.
_DEFAULT_REQUIRES_REVIEW = {
    ConfidenceTier.HIGH: False,
    ConfidenceTier.MEDIUM: True,
    ConfidenceTier.LOW: True,
}


@dataclass
class _RunProgress:
    done: int = 0
    failed: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class GradingPipeline:
    """Runs, regrades, and summarizes grading for one question at a time."""

    def __init__(
        self,
        store: DocumentStore,
        gateway: ProviderGateway,
        parallelism: int = 8,
    ):
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        self._store = store
        self._gateway = gateway
        self._parallelism = parallelism
        self._run_lock = threading.Lock()

    # -- persistence helpers -------------------------------------------------

    def _put_record(self, record: GradeRecord, question: Question) -> None:
        assert_score_consistent(record, question)
        self._store.put(RECORD_KIND, record.id, record.to_dict(), action="grade")

    def _put_run(self, run: GradingRun) -> None:
        self._store.put(RUN_KIND, run.id, run.to_dict(), action="run")

    def load_record(self, record_id: str) -> GradeRecord:
        return GradeRecord.from_dict(self._store.get(RECORD_KIND, record_id).payload)

    def load_run(self, run_id: str) -> GradingRun:
        return GradingRun.from_dict(self._store.get(RUN_KIND, run_id).payload)

    def runs_for_question(self, question_id: str) -> list[GradingRun]:
        runs = [
            GradingRun.from_dict(r.payload)
            for r in self._store.list(RUN_KIND)
            if r.payload["question_id"] == question_id
        ]
        return sorted(runs, key=lambda r: r.sequence)

    # -- grading -------------------------------------------------------------

    def prepare_run(
        self,
        question: Question,
        submissions: Sequence[Submission],
        wisdoms: Sequence[Any] = (),
        msmc_policy: MsmcPolicy = MsmcPolicy.EXACT_MATCH,
        regrade_of: str | None = None,
    ) -> GradingRun:
        """Register a new run in the Running state without grading yet.

        Only one run per question may be active at a time. The wisdom list
        is frozen into the run here, so later edits cannot leak in.
        """
        self._validate_question(question)
        with self._run_lock:
            existing = self.runs_for_question(question.id)
            if any(run.state is RunState.RUNNING for run in existing):
                raise RunAlreadyActive(f"question {question.id} already has an active run")
            sequence = len(existing)
            run = GradingRun(
                id=derived_id("run", question.id, str(sequence)),
                question_id=question.id,
                assignment_id=question.assignment_id,
                sequence=sequence,
                state=RunState.RUNNING,
                total=len(submissions),
                pending=len(submissions),
                done=0,
                failed=0,
                wisdom_snapshot=_snapshot_wisdoms(wisdoms),
                record_ids=tuple(record_id_for(question.id, s.id) for s in submissions),
                msmc_policy=msmc_policy,
                regrade_of=regrade_of,
            )
            self._put_run(run)
        return run

    def run_grading(
        self,
        question: Question,
        submissions: Sequence[Submission],
        wisdoms: Sequence[Any] = (),
        policy: "ConfidencePolicy | None" = None,
        msmc_policy: MsmcPolicy = MsmcPolicy.EXACT_MATCH,
    ) -> GradingRun:
        """Grade every submission for one question in a fresh run.

        Individual failures (provider outage, malformed output, missing
        region) are routed to the manual queue; they never abort the run or
        drop a submission.
        """
        run = self.prepare_run(question, submissions, wisdoms, msmc_policy)
        return self.execute_run(run, question, submissions, policy)

    def regrade(
        self,
        question: Question,
        submissions: Sequence[Submission],
        wisdoms: Sequence[Any] = (),
        policy: "ConfidencePolicy | None" = None,
    ) -> GradingRun:
        """Re-run grading with an updated wisdom list.

        Requires a prior completed run. Records a human has already
        reviewed keep their existing state; everything else is regraded
        against the same record ids. Stored transcriptions are reused so a
        regrade changes only the grading step.
        """
        prior = [r for r in self.runs_for_question(question.id) if r.state is RunState.COMPLETED]
        if not prior:
            raise RunNotCompleted(f"question {question.id} has no completed run to regrade")
        run = self.prepare_run(
            question,
            submissions,
            wisdoms,
            msmc_policy=prior[-1].msmc_policy,
            regrade_of=prior[-1].id,
        )
        return self.execute_run(run, question, submissions, policy)

    def execute_run(
        self,
        run: GradingRun,
        question: Question,
        submissions: Sequence[Submission],
        policy: "ConfidencePolicy | None" = None,
    ) -> GradingRun:
        """Grade a prepared run to completion.

        Counters are persisted as records finish, so a concurrent reader
        always sees pending + done + failed == total. A regrade (a run
        with ``regrade_of`` set) skips human-reviewed records and reuses
        stored transcriptions.
        """
        preserve_reviewed = run.regrade_of is not None
        progress = _RunProgress()
        wisdom_texts = [dict(w) for w in run.wisdom_snapshot]

        def checkpoint() -> GradingRun:
            return replace(
                run,
                pending=run.total - progress.done - progress.failed,
                done=progress.done,
                failed=progress.failed,
            )

        def work(submission: Submission) -> None:
            record_id = record_id_for(question.id, submission.id)
            stored_transcription = None
            if preserve_reviewed:
                existing = self._store.try_get(RECORD_KIND, record_id)
                if existing is not None:
                    current = GradeRecord.from_dict(existing.payload)
                    if current.status is RecordStatus.REVIEWED:
                        with progress.lock:
                            progress.done += 1
                            self._put_run(checkpoint())
                        return
                    stored_transcription = current.transcription
            record, failed = self._grade_one(
                question, submission, wisdom_texts, policy, run.msmc_policy, stored_transcription
            )
            self._put_record(record, question)
            with progress.lock:
                if failed:
                    progress.failed += 1
                else:
                    progress.done += 1
                self._put_run(checkpoint())

        try:
            if self._parallelism == 1 or len(submissions) <= 1:
                for submission in submissions:
                    work(submission)
            else:
                with ThreadPoolExecutor(max_workers=self._parallelism) as pool:
                    list(pool.map(work, submissions))
        except BaseException:
            with progress.lock:
                self._put_run(replace(checkpoint(), state=RunState.FAILED))
            raise

        final = replace(
            run,
            state=RunState.COMPLETED,
            pending=0,
            done=progress.done,
            failed=progress.failed,
        )
        self._put_run(final)
        return final

    def _grade_one(
        self,
        question: Question,
        submission: Submission,
        wisdoms: Sequence[Mapping[str, str]],
        policy: "ConfidencePolicy | None",
        msmc_policy: MsmcPolicy,
        stored_transcription: TranscriptionRecord | None,
    ) -> tuple[GradeRecord, bool]:
        """Produce a record for one submission; returns (record, failed)."""
        record_id = record_id_for(question.id, submission.id)
        if question.format in (QuestionFormat.SSMC, QuestionFormat.MSMC):
            return self._grade_mc(record_id, question, submission, policy, msmc_policy), False
        if question.format is QuestionFormat.DRAWING:
            record = GradeRecord(
                id=record_id,
                question_id=question.id,
                submission_id=submission.id,
                status=RecordStatus.MANUAL_QUEUE,
                provenance=Provenance.HUMAN,
                score=Fraction(0),
                failure="drawing responses are graded by hand",
            )
            return record, False

        try:
            transcription = stored_transcription or self._transcribe(question, submission)
        except (ProviderUnavailable, MalformedProviderOutput, ValidationFailed) as exc:
            return self._manual_record(record_id, question, submission, None, str(exc)), True

        if not transcription.text.strip():
            return self._blank_record(record_id, question, submission, transcription, policy), False

        try:
            result = self._gateway.grade(
                transcription.as_provider_input(), question, question.rubric, wisdoms
            )
        except (ProviderUnavailable, MalformedProviderOutput) as exc:
            return (
                self._manual_record(record_id, question, submission, transcription, str(exc)),
                True,
            )

        selection = frozenset(result.selected_item_ids)
        score = compute_score(
            question.rubric,
            RubricSelection(grade_record_id=record_id, selected_item_ids=selection),
        )
        summary = self._summarize(question, transcription.text, selection)
        tier = result.confidence
        record = GradeRecord(
            id=record_id,
            question_id=question.id,
            submission_id=submission.id,
            status=self._status_for(tier, policy),
            provenance=Provenance.AI,
            score=score,
            selection=selection,
            confidence=tier,
            transcription=transcription,
            summary=summary,
        )
        return record, False

    def _grade_mc(
        self,
        record_id: str,
        question: Question,
        submission: Submission,
        policy: "ConfidencePolicy | None",
        msmc_policy: MsmcPolicy,
    ) -> GradeRecord:
        chosen = submission.mc_responses.get(question.id, frozenset())
        response = McResponse(question_id=question.id, chosen=chosen)
        if question.format is QuestionFormat.SSMC:
            score = grade_ssmc(question.answer_key, response, question.points)
        else:
            score = grade_msmc(
                question.answer_key, question.options, response, question.points, msmc_policy
            )
        picked = ", ".join(sorted(chosen)) if chosen else "nothing"
        key = ", ".join(sorted(question.answer_key))
        return GradeRecord(
            id=record_id,
            question_id=question.id,
            submission_id=submission.id,
            status=self._status_for(ConfidenceTier.HIGH, policy),
            provenance=Provenance.AI,
            score=score,
            confidence=ConfidenceTier.HIGH,
            summary=f"Selected {picked}; answer key is {key}.",
            mc_chosen=tuple(sorted(chosen)),
        )

    def _blank_record(
        self,
        record_id: str,
        question: Question,
        submission: Submission,
        transcription: TranscriptionRecord,
        policy: "ConfidencePolicy | None",
    ) -> GradeRecord:
        return GradeRecord(
            id=record_id,
            question_id=question.id,
            submission_id=submission.id,
            status=self._status_for(ConfidenceTier.HIGH, policy),
            provenance=Provenance.AI,
            score=no_response_score(question.rubric),
            confidence=ConfidenceTier.HIGH,
            transcription=transcription,
            summary="No response provided.",
            is_blank=True,
        )

    def _manual_record(
        self,
        record_id: str,
        question: Question,
        submission: Submission,
        transcription: TranscriptionRecord | None,
        reason: str,
    ) -> GradeRecord:
        return GradeRecord(
            id=record_id,
            question_id=question.id,
            submission_id=submission.id,
            status=RecordStatus.MANUAL_QUEUE,
            provenance=Provenance.HUMAN,
            score=Fraction(0),
            transcription=transcription,
            failure=reason,
        )

    def _transcribe(self, question: Question, submission: Submission) -> TranscriptionRecord:
        region = submission.resolve_region(question.id)
        if region is None:
            raise ValidationFailed(
                f"submission {submission.id} has no region for question {question.id}"
            )
        result = self._gateway.transcribe(region, context=question)
        return TranscriptionRecord(text=result.text, confidence=result.confidence)

    def _summarize(self, question: Question, text: str, selection: frozenset[str]) -> str:
        labels = [item.label for item in question.rubric.items if item.id in selection]
        try:
            return self._gateway.summarize(labels, text, question.rubric)
        except (ProviderUnavailable, MalformedProviderOutput):
            return ""

    def _status_for(
        self, tier: ConfidenceTier, policy: "ConfidencePolicy | None"
    ) -> RecordStatus:
        if policy is None:
            needs_review = _DEFAULT_REQUIRES_REVIEW[tier]
        else:
            needs_review = policy.requires_review(tier)
        return RecordStatus.NEEDS_REVIEW if needs_review else RecordStatus.AI_PROPOSED

    # -- summaries and shadow grading ---------------------------------------

    def generate_summaries(self, run: GradingRun, question: Question) -> int:
        """Fill in missing summaries for a run; returns how many records
        now carry one. Per-record provider failures leave the summary empty."""
        if run.state is not RunState.COMPLETED:
            raise RunNotCompleted(f"run {run.id} is not completed")
        have = 0
        for record_id in run.record_ids:
            record = self.load_record(record_id)
            if record.status is RecordStatus.MANUAL_QUEUE:
                continue
            if not record.summary:
                text = record.transcription.text if record.transcription else ""
                summary = self._summarize(question, text, record.selection)
                if summary:
                    record = replace(record, summary=summary)
                    self._put_record(record, question)
            if record.summary:
                have += 1
        return have

    def propose_selection(
        self,
        question: Question,
        record: GradeRecord,
        wisdoms: Sequence[Any],
    ) -> frozenset[str] | None:
        """Grade a stored transcription again without persisting anything.

        Used to preview how an updated wisdom list would grade; returns
        None when the record has no transcription or the provider fails.
        """
        if record.transcription is None or record.is_blank:
            return None
        wisdom_texts = [
            {"id": w.id, "text": w.text} for w in wisdoms if getattr(w, "active", True)
        ]
        try:
            result = self._gateway.grade(
                record.transcription.as_provider_input(), question, question.rubric, wisdom_texts
            )
        except (ProviderUnavailable, MalformedProviderOutput):
            return None
        return frozenset(result.selected_item_ids)

    # -- validation ----------------------------------------------------------

    @staticmethod
    def _validate_question(question: Question) -> None:
        from .model import validate_question

        report = validate_question(question)
        if not report.ok:
            raise ValidationFailed("; ".join(report.violations))


def apply_review(
    record: GradeRecord,
    question: Question,
    selection: frozenset[str] | None,
    score_override: Fraction | None = None,
    comment: str | None = None,
    confirm: bool = False,
) -> GradeRecord:
    """Fold a human decision into a record.

    A confirmation keeps the machine grade and marks the record Reviewed.
    A correction replaces the selection (score recomputed from the rubric)
    or, for manual grading, sets the score directly. Either way the record
    becomes Reviewed and its provenance reflects the human touch.
    """
    if confirm:
        if record.status is RecordStatus.MANUAL_QUEUE:
            raise ValidationFailed("a manual-queue record has no machine grade to confirm")
        updated = replace(record, status=RecordStatus.REVIEWED)
    elif selection is not None:
        rubric = question.rubric
        if rubric is None:
            raise ValidationFailed(f"question {question.id} has no rubric to select from")
        if record.is_blank and selection == record.selection:
            # Re-submitting the empty selection on a blank response is a
            # confirmation, not a correction; keep the no-response score.
            updated = replace(record, status=RecordStatus.REVIEWED)
        else:
            new_score = compute_score(
                rubric, RubricSelection(grade_record_id=record.id, selected_item_ids=selection)
            )
            if record.provenance is Provenance.AI:
                changed = selection != record.selection or record.is_blank
                provenance = Provenance.AI_THEN_HUMAN if changed else Provenance.AI
            else:
                provenance = Provenance.HUMAN
            updated = replace(
                record,
                status=RecordStatus.REVIEWED,
                provenance=provenance,
                selection=selection,
                score=new_score,
                is_blank=False,
                failure=None,
            )
    elif score_override is not None:
        if question.rubric is not None and record.status is not RecordStatus.MANUAL_QUEUE:
            raise ValidationFailed(
                "correct the rubric selection instead of overriding the score"
            )
        provenance = (
            Provenance.HUMAN if record.provenance is Provenance.HUMAN else Provenance.AI_THEN_HUMAN
        )
        updated = replace(
            record,
            status=RecordStatus.REVIEWED,
            provenance=provenance,
            score=score_override,
            is_blank=False,
            failure=None,
        )
    else:
        raise ValidationFailed("review must confirm, select rubric items, or set a score")
    if comment:
        updated = replace(updated, comments=updated.comments + (comment,))
    return updated
