"""Instructor calibration loop: sample, correct, distill, regrade.

A calibration session samples graded records for one question. The
instructor reviews each sampled record, either confirming the machine's
rubric selection or correcting it. Disagreements are distilled into
grading wisdoms, short instructions attached to rubric items that steer
every later grading call. Applying a session activates its wisdoms,
regrades the unreviewed records, and reports agreement before and after
so the instructor can see whether the wisdoms helped.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Mapping, Sequence

from .canon import frac_from_str, frac_to_str
from .errors import (
    NoCompletedRun,
    NoCorrections,
    NotInSample,
    SessionClosed,
    StateConflict,
    UnknownEntity,
    ValidationFailed,
)
from .model import Question, Submission, derived_id
from .pipeline import (
    GradeRecord,
    GradingPipeline,
    GradingRun,
    RecordStatus,
    RunState,
    apply_review,
)
from .provider import ProviderGateway
from .store import DocumentStore

SESSION_KIND = "calibration_session"
WISDOM_KIND = "wisdom"
QUESTION_KIND = "question"
SUBMISSION_KIND = "submission"

DEFAULT_SAMPLE_SIZE = 10


class SessionState(str, Enum):
    OPEN = "open"
    APPLIED = "applied"


@dataclass(frozen=True)
class Discrepancy:
    """One sampled record where the human disagreed with the machine."""

    record_id: str
    added_item_ids: frozenset[str]
    removed_item_ids: frozenset[str]

    @property
    def id(self) -> str:
        return self.record_id

    @property
    def added(self) -> frozenset[str]:
        return self.added_item_ids

    @property
    def removed(self) -> frozenset[str]:
        return self.removed_item_ids

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "added_item_ids": sorted(self.added_item_ids),
            "removed_item_ids": sorted(self.removed_item_ids),
        }


@dataclass(frozen=True)
class GradingWisdom:
    """A distilled grading instruction tied to one rubric item.

    Inactive drafts are editable; applying the session activates them,
    after which only the active flag may change.
    """

    id: str
    question_id: str
    session_id: str
    rubric_item_id: str
    text: str
    active: bool
    ordinal: int
    source_discrepancy_ids: tuple[str, ...] = ()
    edited_by_instructor: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question_id": self.question_id,
            "session_id": self.session_id,
            "rubric_item_id": self.rubric_item_id,
            "text": self.text,
            "active": self.active,
            "ordinal": self.ordinal,
            "source_discrepancy_ids": list(self.source_discrepancy_ids),
            "edited_by_instructor": self.edited_by_instructor,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "GradingWisdom":
        return GradingWisdom(
            id=data["id"],
            question_id=data["question_id"],
            session_id=data["session_id"],
            rubric_item_id=data["rubric_item_id"],
            text=data["text"],
            active=data["active"],
            ordinal=data["ordinal"],
            source_discrepancy_ids=tuple(data.get("source_discrepancy_ids", ())),
            edited_by_instructor=data.get("edited_by_instructor", False),
        )


@dataclass(frozen=True)
class CalibrationSession:
    id: str
    question_id: str
    state: SessionState
    seed: int
    sample_record_ids: tuple[str, ...]
    # record id -> human-corrected selection, recorded during the session
    corrections: dict[str, tuple[str, ...]]
    # record id -> the machine selection as it stood before the correction
    ai_snapshots: dict[str, tuple[str, ...]]
    wisdom_ids: tuple[str, ...] = ()
    before_agreement: Fraction | None = None
    after_agreement: Fraction | None = None
    regrade_run_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question_id": self.question_id,
            "state": self.state.value,
            "seed": self.seed,
            "sample_record_ids": list(self.sample_record_ids),
            "corrections": {k: list(v) for k, v in sorted(self.corrections.items())},
            "ai_snapshots": {k: list(v) for k, v in sorted(self.ai_snapshots.items())},
            "wisdom_ids": list(self.wisdom_ids),
            "before_agreement": (
                frac_to_str(self.before_agreement) if self.before_agreement is not None else None
            ),
            "after_agreement": (
                frac_to_str(self.after_agreement) if self.after_agreement is not None else None
            ),
            "regrade_run_id": self.regrade_run_id,
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "CalibrationSession":
        return CalibrationSession(
            id=data["id"],
            question_id=data["question_id"],
            state=SessionState(data["state"]),
            seed=data["seed"],
            sample_record_ids=tuple(data["sample_record_ids"]),
            corrections={k: tuple(v) for k, v in data["corrections"].items()},
            ai_snapshots={k: tuple(v) for k, v in data["ai_snapshots"].items()},
            wisdom_ids=tuple(data["wisdom_ids"]),
            before_agreement=(
                frac_from_str(data["before_agreement"]) if data["before_agreement"] else None
            ),
            after_agreement=(
                frac_from_str(data["after_agreement"]) if data["after_agreement"] else None
            ),
            regrade_run_id=data["regrade_run_id"],
        )


class CalibrationManager:
    """Drives calibration sessions against the store and pipeline."""

    def __init__(self, store: DocumentStore, pipeline: GradingPipeline, gateway: ProviderGateway):
        self._store = store
        self._pipeline = pipeline
        self._gateway = gateway

    # -- loading -------------------------------------------------------------

    def load_session(self, session_id: str) -> CalibrationSession:
        return CalibrationSession.from_dict(self._store.get(SESSION_KIND, session_id).payload)

    def load_wisdom(self, wisdom_id: str) -> GradingWisdom:
        return GradingWisdom.from_dict(self._store.get(WISDOM_KIND, wisdom_id).payload)

    def wisdoms_for_question(self, question_id: str, active_only: bool = False) -> list[GradingWisdom]:
        wisdoms = [
            GradingWisdom.from_dict(r.payload)
            for r in self._store.list(WISDOM_KIND)
            if r.payload["question_id"] == question_id
        ]
        if active_only:
            wisdoms = [w for w in wisdoms if w.active]
        return sorted(wisdoms, key=lambda w: (w.session_id, w.ordinal))

    def _latest_completed_run(self, question_id: str) -> GradingRun:
        runs = [
            r for r in self._pipeline.runs_for_question(question_id)
            if r.state is RunState.COMPLETED
        ]
        if not runs:
            raise NoCompletedRun(f"question {question_id} has no completed grading run")
        return runs[-1]

    def _save(self, session: CalibrationSession) -> None:
        self._store.put(SESSION_KIND, session.id, session.to_dict(), action="calibration")

    # -- session lifecycle ---------------------------------------------------

    def open_session(
        self,
        question: Question,
        sample_size: int = DEFAULT_SAMPLE_SIZE,
        seed: int = 0,
    ) -> CalibrationSession:
        """Sample graded records for instructor review.

        The sample is drawn without replacement from the latest completed
        run's machine-graded records, deterministically from the seed. A
        sample smaller than requested is allowed when fewer records exist.
        """
        if sample_size < 1:
            raise ValidationFailed("sample_size must be at least 1")
        run = self._latest_completed_run(question.id)
        candidates = []
        for record_id in run.record_ids:
            record = self._pipeline.load_record(record_id)
            if record.status in (RecordStatus.AI_PROPOSED, RecordStatus.NEEDS_REVIEW):
                candidates.append(record_id)
        candidates.sort()
        if not candidates:
            raise NoCompletedRun(
                f"question {question.id} has no machine-graded records left to sample"
            )
        size = min(sample_size, len(candidates))
        sample = sorted(random.Random(seed).sample(candidates, size))
        existing = [
            r for r in self._store.list(SESSION_KIND)
            if r.payload["question_id"] == question.id
        ]
        session = CalibrationSession(
            id=derived_id("calibration", question.id, str(len(existing))),
            question_id=question.id,
            state=SessionState.OPEN,
            seed=seed,
            sample_record_ids=tuple(sample),
            corrections={},
            ai_snapshots={},
        )
        self._save(session)
        return session

    def record_correction(
        self,
        session_id: str,
        record_id: str,
        corrected_selection: frozenset[str],
        question: Question,
        comment: str | None = None,
    ) -> CalibrationSession:
        """Record the instructor's decision for one sampled record.

        The decision is a real review: the record becomes Reviewed with
        the corrected selection (or confirmed as-is when the selection
        matches). The machine's original selection is snapshotted first so
        agreement can be measured later.
        """
        session = self.load_session(session_id)
        if session.state is not SessionState.OPEN:
            raise SessionClosed(f"session {session_id} is closed")
        if record_id not in session.sample_record_ids:
            raise NotInSample(f"record {record_id} is not in the session sample")
        record = self._pipeline.load_record(record_id)
        snapshot = tuple(sorted(record.selection))
        if corrected_selection == record.selection:
            reviewed = apply_review(record, question, None, confirm=True, comment=comment)
        else:
            reviewed = apply_review(
                record, question, frozenset(corrected_selection), comment=comment
            )
        self._store.put(
            "grade_record", reviewed.id, reviewed.to_dict(), actor="instructor", action="review"
        )
        corrections = dict(session.corrections)
        snapshots = dict(session.ai_snapshots)
        if record_id not in snapshots:
            snapshots[record_id] = snapshot
        corrections[record_id] = tuple(sorted(corrected_selection))
        session = replace(session, corrections=corrections, ai_snapshots=snapshots)
        self._save(session)
        return session

    def extract_discrepancies(self, session_id: str) -> list[Discrepancy]:
        """List the sampled records where the human changed the selection."""
        session = self.load_session(session_id)
        discrepancies = []
        for record_id in sorted(session.corrections):
            human = frozenset(session.corrections[record_id])
            machine = frozenset(session.ai_snapshots.get(record_id, ()))
            if human != machine:
                discrepancies.append(
                    Discrepancy(
                        record_id=record_id,
                        added_item_ids=human - machine,
                        removed_item_ids=machine - human,
                    )
                )
        return discrepancies

    def propose_wisdoms(self, session_id: str, question: Question) -> list[GradingWisdom]:
        """Distill the session's discrepancies into draft wisdoms.

        Drafts are inactive and editable; re-proposing overwrites the
        previous drafts. A session whose corrections all agreed with the
        machine yields an empty proposal.
        """
        session = self.load_session(session_id)
        if session.state is not SessionState.OPEN:
            raise SessionClosed(f"session {session_id} is closed")
        if not session.corrections:
            raise NoCorrections(f"session {session_id} has no corrections to learn from")
        discrepancies = self.extract_discrepancies(session_id)
        if not discrepancies:
            drafts: list[GradingWisdom] = []
        else:
            if question.rubric is None:
                raise ValidationFailed(f"question {question.id} has no rubric")
            proposals = self._gateway.synthesize_wisdoms(discrepancies, question.rubric)
            drafts = []
            for index, proposal in enumerate(proposals):
                wisdom = GradingWisdom(
                    id=derived_id("wisdom", session.id, proposal.item_id, str(index)),
                    question_id=session.question_id,
                    session_id=session.id,
                    rubric_item_id=proposal.item_id,
                    text=proposal.text,
                    active=False,
                    ordinal=index,
                    source_discrepancy_ids=proposal.source_discrepancy_ids,
                )
                self._store.put(WISDOM_KIND, wisdom.id, wisdom.to_dict(), action="propose")
                drafts.append(wisdom)
        session = replace(session, wisdom_ids=tuple(w.id for w in drafts))
        self._save(session)
        return drafts

    def edit_wisdom(self, wisdom_id: str, text: str) -> GradingWisdom:
        """Rewrite a draft wisdom's text. Active wisdoms are frozen."""
        wisdom = self.load_wisdom(wisdom_id)
        if wisdom.active:
            raise StateConflict(f"wisdom {wisdom_id} is active and cannot be edited")
        if not text.strip():
            raise ValidationFailed("wisdom text must not be empty")
        updated = replace(wisdom, text=text, edited_by_instructor=True)
        self._store.put(WISDOM_KIND, updated.id, updated.to_dict(), action="edit")
        return updated

    def set_wisdom_active(self, wisdom_id: str, active: bool) -> GradingWisdom:
        wisdom = self.load_wisdom(wisdom_id)
        updated = replace(wisdom, active=active)
        self._store.put(WISDOM_KIND, updated.id, updated.to_dict(), action="toggle")
        return updated

    def apply_and_regrade(
        self,
        session_id: str,
        question: Question,
        policy: Any = None,
    ) -> tuple[CalibrationSession, Question]:
        """Activate the session's wisdoms and regrade with them.

        The drafts become active, their texts are pinned to the rubric
        items as wisdom notes, the unreviewed records are regraded, and
        the session closes carrying before and after agreement rates.
        Records the instructor already reviewed are left exactly as they
        were.
        """
        session = self.load_session(session_id)
        if session.state is not SessionState.OPEN:
            raise SessionClosed(f"session {session_id} is closed")
        if not session.corrections:
            raise NoCorrections(f"session {session_id} has no corrections")

        before = self._agreement_before(session)

        for wisdom_id in session.wisdom_ids:
            self.set_wisdom_active(wisdom_id, True)
        active = self.wisdoms_for_question(question.id, active_only=True)

        updated_question = question
        if active and question.rubric is not None:
            # Pin the full set of active wisdom texts onto their items so the
            # rubric a reviewer sees carries the same guidance the grader got.
            by_item: dict[str, list[str]] = {}
            for wisdom in active:
                by_item.setdefault(wisdom.rubric_item_id, []).append(wisdom.text)
            rubric = question.rubric
            for item_id, texts in by_item.items():
                rubric = rubric.with_item_wisdom(item_id, texts)
            updated_question = question.with_rubric(rubric)
            self._store.put(
                QUESTION_KIND, updated_question.id, updated_question.to_dict(), action="calibrate"
            )
        run = self._latest_completed_run(question.id)
        submissions = self._submissions_for_run(run)
        regrade_run = self._pipeline.regrade(updated_question, submissions, active, policy)

        after = self._agreement_after(session, updated_question, active)

        session = replace(
            session,
            state=SessionState.APPLIED,
            before_agreement=before,
            after_agreement=after,
            regrade_run_id=regrade_run.id,
        )
        self._save(session)
        return session, updated_question

    # -- agreement -----------------------------------------------------------

    def _agreement_before(self, session: CalibrationSession) -> Fraction:
        total = len(session.corrections)
        agreed = sum(
            1
            for record_id, human in session.corrections.items()
            if frozenset(human) == frozenset(session.ai_snapshots.get(record_id, ()))
        )
        return Fraction(agreed, total)

    def _agreement_after(
        self,
        session: CalibrationSession,
        question: Question,
        wisdoms: Sequence[GradingWisdom],
    ) -> Fraction:
        """Shadow-grade the corrected records with the new wisdoms.

        The corrected records themselves are Reviewed and must not change,
        so the machine's would-be selection is computed off to the side
        and compared against the human's answer.
        """
        total = len(session.corrections)
        agreed = 0
        for record_id, human in session.corrections.items():
            record = self._pipeline.load_record(record_id)
            shadow = self._pipeline.propose_selection(question, record, wisdoms)
            if shadow is None:
                # Blank or untranscribable: the machine grade could not have
                # changed, so fall back to the original selection.
                shadow = frozenset(session.ai_snapshots.get(record_id, ()))
            if shadow == frozenset(human):
                agreed += 1
        return Fraction(agreed, total)

    # -- helpers -------------------------------------------------------------

    def _submissions_for_run(self, run: GradingRun) -> list[Submission]:
        submissions = []
        for record_id in run.record_ids:
            record = self._pipeline.load_record(record_id)
            stored = self._store.try_get(SUBMISSION_KIND, record.submission_id)
            if stored is None:
                raise UnknownEntity(f"submission {record.submission_id} not found")
            submissions.append(Submission.from_dict(stored.payload))
        return submissions
