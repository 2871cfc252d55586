"""Reporting: time saved by autograding, accuracy of machine grades,
and provider usage counters.

The headline number is the autograded count c: responses no human had to
grade for cause. Spot-checks do not reduce c (they are optional
assurance, not required work), and neither does a review that merely
confirmed the machine. Time saved is t_avg * c out of a total of
t_avg * students * questions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .canon import frac_to_str
from .errors import ValidationFailed, ZeroTotal
from .model import ConfidenceTier
from .pipeline import GradeRecord, Provenance, RecordStatus
from .review import ConfidencePolicy, DEFAULT_POLICY, effective_tier


@dataclass(frozen=True)
class TimeSavingsReport:
    students: int
    questions: int
    autograded_count: int
    t_avg_minutes: Fraction
    total_minutes: Fraction
    saved_minutes: Fraction
    saved_pct: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "students": self.students,
            "questions": self.questions,
            "autograded_count": self.autograded_count,
            "t_avg_minutes": frac_to_str(self.t_avg_minutes),
            "total_minutes": frac_to_str(self.total_minutes),
            "saved_minutes": frac_to_str(self.saved_minutes),
            "total_hours": float(self.total_minutes / 60),
            "saved_hours": float(self.saved_minutes / 60),
            "saved_pct": self.saved_pct,
        }


def time_savings(
    t_avg_minutes: Fraction | int,
    students: int,
    questions: int,
    autograded_count: int,
) -> TimeSavingsReport:
    """Estimate grading time saved when c of I*J responses were autograded.

    Exact arithmetic throughout: the percentage is 100 * c / (I*J)
    converted to float only at the end.
    """
    t_avg = Fraction(t_avg_minutes)
    if students < 0 or questions < 0 or autograded_count < 0 or t_avg < 0:
        raise ValidationFailed("time-savings inputs must be non-negative")
    total_responses = students * questions
    if total_responses == 0:
        raise ZeroTotal("no responses: students * questions is zero")
    if autograded_count > total_responses:
        raise ValidationFailed(
            f"autograded count {autograded_count} exceeds total responses {total_responses}"
        )
    return TimeSavingsReport(
        students=students,
        questions=questions,
        autograded_count=autograded_count,
        t_avg_minutes=t_avg,
        total_minutes=t_avg * total_responses,
        saved_minutes=t_avg * autograded_count,
        saved_pct=float(Fraction(100 * autograded_count, total_responses)),
    )


def is_autograded(
    record: GradeRecord,
    policy: ConfidencePolicy = DEFAULT_POLICY,
    unmatched_submission_ids: frozenset[str] = frozenset(),
) -> bool:
    """True when no human had to grade this record for cause.

    Mirrors the review router's for-cause routing: manual-queue records,
    unmatched submissions, tiers the policy sends to review, and low
    transcription confidence all demand a human. A human override also
    disqualifies the record even if it was only found during a spot-check.
    """
    if record.status is RecordStatus.MANUAL_QUEUE:
        return False
    if record.provenance is not Provenance.AI:
        return False
    if record.submission_id in unmatched_submission_ids:
        return False
    if policy.requires_review(effective_tier(record)):
        return False
    if record.transcription is not None and record.transcription.confidence == "low":
        return False
    return True


def autograded_count(
    records: Iterable[GradeRecord],
    policy: ConfidencePolicy = DEFAULT_POLICY,
    unmatched_submission_ids: Iterable[str] = (),
) -> int:
    unmatched = frozenset(unmatched_submission_ids)
    return sum(1 for record in records if is_autograded(record, policy, unmatched))


def accuracy(confirmed: int, overridden: int) -> Fraction:
    """Fraction of human-checked machine grades the human agreed with."""
    if confirmed < 0 or overridden < 0:
        raise ValidationFailed("counts must be non-negative")
    total = confirmed + overridden
    if total == 0:
        raise ZeroTotal("no reviewed machine grades to measure")
    return Fraction(confirmed, total)


def _confusion(records: Iterable[GradeRecord]) -> tuple[int, int]:
    confirmed = 0
    overridden = 0
    for record in records:
        if record.status is not RecordStatus.REVIEWED:
            continue
        if record.provenance is Provenance.AI:
            confirmed += 1
        elif record.provenance is Provenance.AI_THEN_HUMAN:
            overridden += 1
        # Provenance HUMAN means there was no machine grade to judge.
    return confirmed, overridden


def accuracy_report(
    groups: Mapping[str, Sequence[GradeRecord]],
    tier: ConfidenceTier | None = None,
) -> dict[str, Any]:
    """Per-group and overall accuracy of reviewed machine grades.

    ``groups`` maps a label (such as a course subject) to its records.
    Pass ``tier`` to restrict the measurement to one confidence tier.
    Groups with no reviewed machine grades report null accuracy rather
    than failing the whole report.
    """
    rows: dict[str, Any] = {}
    total_confirmed = 0
    total_overridden = 0
    for label in sorted(groups):
        records = groups[label]
        if tier is not None:
            records = [r for r in records if r.confidence is tier]
        confirmed, overridden = _confusion(records)
        total_confirmed += confirmed
        total_overridden += overridden
        rows[label] = {
            "confirmed": confirmed,
            "overridden": overridden,
            "accuracy_pct": (
                float(100 * accuracy(confirmed, overridden))
                if confirmed + overridden
                else None
            ),
        }
    overall = {
        "confirmed": total_confirmed,
        "overridden": total_overridden,
        "accuracy_pct": (
            float(100 * accuracy(total_confirmed, total_overridden))
            if total_confirmed + total_overridden
            else None
        ),
    }
    return {"groups": rows, "overall": overall}


def usage_counters(gateway: Any) -> dict[str, int]:
    """Provider calls by capability plus cache hits, for cost tracking."""
    counters = dict(getattr(gateway, "calls", {}))
    counters["cache_hits"] = getattr(gateway, "cache_hits", 0)
    return {k: counters[k] for k in sorted(counters)}
