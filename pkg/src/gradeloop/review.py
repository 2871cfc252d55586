"""Confidence-gated routing of grade records to human reviewers.

A policy maps each grading confidence tier to a rule: does the tier
require review, and what fraction of the remainder gets spot-checked.
The queue builder applies the policy to a batch of records, dedupes to
one entry per record, and orders the queue least confident first.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .canon import ceil_mul, frac_from_str, frac_to_str
from .errors import GradingIncomplete, ValidationFailed
from .model import ConfidenceTier, Question, StudentRef, Submission
from .pipeline import GradeRecord, RecordStatus


class ReviewReason(str, Enum):
    MANUAL_QUEUE = "manual_queue"
    UNMATCHED = "unmatched"
    POLICY_REQUIRED = "policy_required"
    LOW_TRANSCRIPTION_CONFIDENCE = "low_transcription_confidence"
    SPOT_CHECK = "spot_check"


# When several reasons apply to one record, keep the highest-priority one.
_REASON_PRIORITY = {
    ReviewReason.MANUAL_QUEUE: 0,
    ReviewReason.UNMATCHED: 1,
    ReviewReason.POLICY_REQUIRED: 2,
    ReviewReason.LOW_TRANSCRIPTION_CONFIDENCE: 3,
    ReviewReason.SPOT_CHECK: 4,
}


@dataclass(frozen=True)
class TierRule:
    require_review: bool
    spot_check_fraction: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if not 0 <= self.spot_check_fraction <= 1:
            raise ValidationFailed("spot_check_fraction must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "require_review": self.require_review,
            "spot_check_fraction": frac_to_str(self.spot_check_fraction),
        }

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "TierRule":
        return TierRule(
            require_review=data["require_review"],
            spot_check_fraction=frac_from_str(data["spot_check_fraction"]),
        )


@dataclass(frozen=True)
class ConfidencePolicy:
    """Per-tier review rules. The default trusts high-confidence grades,
    spot-checks one in twenty of them, and reviews everything else."""

    rules: Mapping[ConfidenceTier, TierRule] = field(
        default_factory=lambda: {
            ConfidenceTier.HIGH: TierRule(require_review=False, spot_check_fraction=Fraction(1, 20)),
            ConfidenceTier.MEDIUM: TierRule(require_review=True),
            ConfidenceTier.LOW: TierRule(require_review=True),
        }
    )

    def __post_init__(self) -> None:
        missing = [t.value for t in ConfidenceTier if t not in self.rules]
        if missing:
            raise ValidationFailed(f"policy missing rules for tiers: {', '.join(missing)}")

    def rule(self, tier: ConfidenceTier) -> TierRule:
        return self.rules[tier]

    def requires_review(self, tier: ConfidenceTier) -> bool:
        return self.rules[tier].require_review

    def to_dict(self) -> dict[str, Any]:
        return {tier.value: self.rules[tier].to_dict() for tier in ConfidenceTier}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "ConfidencePolicy":
        return ConfidencePolicy(
            rules={ConfidenceTier(k): TierRule.from_dict(v) for k, v in data.items()}
        )


DEFAULT_POLICY = ConfidencePolicy()


@dataclass(frozen=True)
class ReviewQueueEntry:
    record_id: str
    reason: ReviewReason
    position: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "reason": self.reason.value,
            "position": self.position,
        }


@dataclass(frozen=True)
class ReviewQueue:
    entries: tuple[ReviewQueueEntry, ...]
    seed: int
    spot_check_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "seed": self.seed,
            "spot_check_count": self.spot_check_count,
        }

    def __len__(self) -> int:
        return len(self.entries)


def effective_tier(record: GradeRecord) -> ConfidenceTier:
    """Overall confidence is the weaker of transcription and grading."""
    tier = record.confidence or ConfidenceTier.LOW
    if record.transcription is not None and record.transcription.confidence == "low":
        return ConfidenceTier.LOW
    return tier


def _order_group(record: GradeRecord, reason: ReviewReason) -> int:
    if reason is ReviewReason.MANUAL_QUEUE:
        return 3
    if reason is ReviewReason.UNMATCHED:
        return 4
    return effective_tier(record).rank


def build_review_queue(
    records: Sequence[GradeRecord],
    policy: ConfidencePolicy = DEFAULT_POLICY,
    seed: int = 0,
    unmatched_submission_ids: Iterable[str] = (),
) -> ReviewQueue:
    """Build the review queue for a batch of records.

    Reviewed records are excluded: the queue lists outstanding work only.
    Each record appears at most once, tagged with its highest-priority
    reason. For every tier the policy trusts, a spot-check sample is drawn
    deterministically from the seed over that tier's not-otherwise-queued
    records, sized by the exact ceiling of fraction times the eligible
    count.
    """
    unmatched = frozenset(unmatched_submission_ids)
    reasons: dict[str, ReviewReason] = {}
    by_id: dict[str, GradeRecord] = {}

    def note(record: GradeRecord, reason: ReviewReason) -> None:
        by_id[record.id] = record
        current = reasons.get(record.id)
        if current is None or _REASON_PRIORITY[reason] < _REASON_PRIORITY[current]:
            reasons[record.id] = reason

    for record in records:
        if record.status is RecordStatus.REVIEWED:
            continue
        if record.status is RecordStatus.MANUAL_QUEUE:
            note(record, ReviewReason.MANUAL_QUEUE)
        if record.submission_id in unmatched:
            note(record, ReviewReason.UNMATCHED)
        if record.status is RecordStatus.MANUAL_QUEUE:
            continue
        tier = effective_tier(record)
        if policy.requires_review(tier):
            note(record, ReviewReason.POLICY_REQUIRED)
        elif record.transcription is not None and record.transcription.confidence == "low":
            note(record, ReviewReason.LOW_TRANSCRIPTION_CONFIDENCE)

    rng = random.Random(seed)
    spot_total = 0
    for tier in (ConfidenceTier.LOW, ConfidenceTier.MEDIUM, ConfidenceTier.HIGH):
        rule = policy.rule(tier)
        if rule.require_review or rule.spot_check_fraction == 0:
            continue
        eligible = sorted(
            record.id
            for record in records
            if record.status in (RecordStatus.AI_PROPOSED, RecordStatus.NEEDS_REVIEW)
            and record.id not in reasons
            and effective_tier(record) is tier
        )
        size = ceil_mul(rule.spot_check_fraction, len(eligible))
        for record_id in rng.sample(eligible, size):
            reasons[record_id] = ReviewReason.SPOT_CHECK
        spot_total += size
    for record in records:
        by_id.setdefault(record.id, record)

    ordered = sorted(
        reasons.items(), key=lambda item: (_order_group(by_id[item[0]], item[1]), item[0])
    )
    entries = tuple(
        ReviewQueueEntry(record_id=record_id, reason=reason, position=index + 1)
        for index, (record_id, reason) in enumerate(ordered)
    )
    return ReviewQueue(entries=entries, seed=seed, spot_check_count=spot_total)


def render_view(
    record: GradeRecord,
    question: Question,
    submission: Submission | None = None,
) -> dict[str, Any]:
    """Assemble everything a reviewer needs on screen for one record."""
    rubric = question.rubric
    items = []
    if rubric is not None:
        for item in rubric.items:
            items.append(
                {
                    "id": item.id,
                    "label": item.label,
                    "points": frac_to_str(item.points),
                    "selected": item.id in record.selection,
                    "wisdom_notes": list(item.wisdom_notes),
                }
            )
    student = submission.student if submission is not None else None
    return {
        "record_id": record.id,
        "question_id": question.id,
        "question_ordinal": question.ordinal,
        "question_statement": question.statement,
        "reference_solution": question.reference_solution,
        "submission_id": record.submission_id,
        "student": (
            {"id": student.id, "display_name": student.display_name} if student else None
        ),
        "status": record.status.value,
        "confidence": record.confidence.value if record.confidence else None,
        "transcription": record.transcription.to_dict() if record.transcription else None,
        "is_blank": record.is_blank,
        "mc_chosen": list(record.mc_chosen) if record.mc_chosen is not None else None,
        "rubric_scheme": rubric.scheme.value if rubric else None,
        "rubric_items": items,
        "score": frac_to_str(record.score),
        "max_score": frac_to_str(rubric.max_total) if rubric else (
            frac_to_str(question.points) if question.points is not None else None
        ),
        "summary": record.summary,
        "comments": list(record.comments),
        "failure": record.failure,
    }


def dispatch_feedback(
    records: Sequence[GradeRecord],
    questions_by_id: Mapping[str, Question],
    gateway: Any,
    style_prompt: str = "",
) -> tuple[list[GradeRecord], int, list[str]]:
    """Draft a student-facing feedback comment for every finalized record.

    Requires grading to be finished: any record still awaiting review or
    manual grading aborts the dispatch. Per-record provider failures are
    collected and reported, not fatal. Returns the updated records, how
    many gained a comment, and the ids that failed.
    """
    outstanding = [
        r.id
        for r in records
        if r.status in (RecordStatus.MANUAL_QUEUE, RecordStatus.NEEDS_REVIEW)
    ]
    if outstanding:
        raise GradingIncomplete(
            f"{len(outstanding)} records still need grading or review"
        )
    updated: list[GradeRecord] = []
    failed: list[str] = []
    count = 0
    for record in records:
        question = questions_by_id[record.question_id]
        rubric = question.rubric
        if rubric is not None:
            labels = [item.label for item in rubric.items if item.id in record.selection]
        else:
            labels = []
        try:
            text = gateway.feedback(labels, frac_to_str(record.score), style_prompt)
        except Exception:
            failed.append(record.id)
            updated.append(record)
            continue
        updated.append(replace(record, comments=record.comments + (text,)))
        count += 1
    return updated, count, failed


def export_grades_csv(
    questions: Sequence[Question],
    records: Mapping[str, GradeRecord],
    submissions: Sequence[Submission],
    roster: Sequence[StudentRef] = (),
) -> str:
    """Render final grades as CSV, one row per submission.

    Columns: student id and name, one score column per question in
    ordinal order, then the total. Unmatched submissions appear with an
    empty student id so no work is silently dropped. Rows are ordered by
    student id, unmatched rows last by submission id.
    """
    ordered_questions = sorted(questions, key=lambda q: q.ordinal)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["student_id", "student_name"]
    header += [f"q{q.ordinal}" for q in ordered_questions]
    header.append("total")
    writer.writerow(header)

    def sort_key(sub: Submission) -> tuple[int, str]:
        if sub.student is not None:
            return (0, sub.student.id)
        return (1, sub.id)

    from .pipeline import record_id_for

    for submission in sorted(submissions, key=sort_key):
        if submission.student is not None:
            row = [submission.student.id, submission.student.display_name]
        else:
            row = ["", f"(unmatched submission {submission.id})"]
        total = Fraction(0)
        for question in ordered_questions:
            record = records.get(record_id_for(question.id, submission.id))
            if record is None:
                row.append("")
                continue
            row.append(frac_to_str(record.score))
            total += record.score
        row.append(frac_to_str(total))
        writer.writerow(row)
    return buffer.getvalue()
