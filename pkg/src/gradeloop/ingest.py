"""Bulk scan intake: manifest splitting and page-to-student matching.

A manifest declares an ordered page list plus a fixed per-submission
template (page count, one region per question ordinal, one name region).
Regions are declared, never detected: exam layouts are fixed per
assignment, so the manifest is the source of truth.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping, Sequence

from .errors import AlreadyMatched, EmptyRoster, PageCountMismatch, ValidationFailed
from .model import PageRegion, Question, StudentRef, Submission, derived_id
from .provider import ProviderGateway

AUTO_MATCH_THRESHOLD = 0.8
CANDIDATE_THRESHOLD = 0.5


@dataclass(frozen=True)
class UploadManifest:
    assignment_id: str
    files: tuple[str, ...]
    template_pages: int
    layout: Mapping[int, PageRegion]
    name_region: PageRegion
    mc_responses: Mapping[str, Mapping[str, tuple[str, ...]]] | None = None

    def __post_init__(self) -> None:
        if self.template_pages < 1:
            raise ValueError("template_pages must be positive")
        for ordinal, region in self.layout.items():
            if region.page_index >= self.template_pages:
                raise ValueError(f"layout for ordinal {ordinal} points past the template")
        if self.name_region.page_index >= self.template_pages:
            raise ValueError("name_region points past the template")

    def to_dict(self) -> dict[str, Any]:
        return {
            "assignment_id": self.assignment_id,
            "files": list(self.files),
            "template_pages": self.template_pages,
            "layout": {str(ordinal): r.to_dict() for ordinal, r in sorted(self.layout.items())},
            "name_region": self.name_region.to_dict(),
            "mc_responses": {
                index: {ordinal: sorted(labels) for ordinal, labels in sorted(per_sub.items())}
                for index, per_sub in sorted((self.mc_responses or {}).items())
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> UploadManifest:
        return cls(
            assignment_id=str(data["assignment_id"]),
            files=tuple(data["files"]),
            template_pages=int(data["template_pages"]),
            layout={
                int(ordinal): PageRegion.from_dict(region)
                for ordinal, region in data["layout"].items()
            },
            name_region=PageRegion.from_dict(data["name_region"]),
            mc_responses={
                str(index): {str(ordinal): tuple(labels) for ordinal, labels in per_sub.items()}
                for index, per_sub in data.get("mc_responses", {}).items()
            },
        )


class MatchStatus(str, Enum):
    AUTO_MATCHED = "auto_matched"
    NEEDS_REVIEW = "needs_review"
    UNMATCHED = "unmatched"
    # Final state after an instructor resolves the match by hand.
    RESOLVED = "resolved"


@dataclass(frozen=True)
class MatchResult:
    submission_id: str
    candidate: StudentRef | None
    match_score: float
    status: MatchStatus

    def to_dict(self) -> dict[str, Any]:
        return {
            "submission_id": self.submission_id,
            "candidate": self.candidate.to_dict() if self.candidate else None,
            "match_score": self.match_score,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MatchResult:
        candidate = data.get("candidate")
        return cls(
            submission_id=str(data["submission_id"]),
            candidate=StudentRef.from_dict(candidate) if candidate else None,
            match_score=float(data["match_score"]),
            status=MatchStatus(data["status"]),
        )


def split_submissions(
    manifest: UploadManifest, questions: Sequence[Question]
) -> list[Submission]:
    """Cut the ordered page list into template-sized submissions.

    Region maps come from the manifest layout, keyed back onto question ids
    through each question's ordinal.
    """
    template = manifest.template_pages
    if len(manifest.files) == 0 or len(manifest.files) % template != 0:
        raise PageCountMismatch(
            f"{len(manifest.files)} pages do not divide into {template}-page submissions"
        )
    by_ordinal = {q.ordinal: q for q in questions}
    for ordinal in manifest.layout:
        if ordinal not in by_ordinal:
            raise ValidationFailed(f"manifest layout references unknown question ordinal {ordinal}")
    mc_declared = manifest.mc_responses or {}
    submissions = []
    for group in range(len(manifest.files) // template):
        pages = manifest.files[group * template : (group + 1) * template]
        region_map = {
            by_ordinal[ordinal].id: region for ordinal, region in manifest.layout.items()
        }
        mc_responses = {}
        for ordinal_str, labels in mc_declared.get(str(group), {}).items():
            ordinal = int(ordinal_str)
            if ordinal not in by_ordinal:
                raise ValidationFailed(
                    f"mc_responses references unknown question ordinal {ordinal}"
                )
            mc_responses[by_ordinal[ordinal].id] = frozenset(labels)
        submissions.append(
            Submission(
                id=derived_id("submission", manifest.assignment_id, str(group)),
                assignment_id=manifest.assignment_id,
                pages=pages,
                region_map=region_map,
                name_region=manifest.name_region,
                mc_responses=mc_responses,
            )
        )
    return submissions


def normalize_name(name: str) -> str:
    return "".join(name.casefold().split())


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, start=1):
        current = [i]
        for j, char_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (char_a != char_b),
                )
            )
        previous = current
    return previous[-1]


def name_similarity(transcribed: str, roster_name: str) -> float:
    """Normalized edit similarity on case-folded, whitespace-stripped names."""
    a = normalize_name(transcribed)
    b = normalize_name(roster_name)
    if not a and not b:
        return 1.0
    distance = levenshtein(a, b)
    return 1.0 - distance / max(len(a), len(b), 1)


def match_student(
    submission: Submission,
    roster: Sequence[StudentRef],
    gateway: ProviderGateway,
    auto_threshold: float = AUTO_MATCH_THRESHOLD,
    candidate_threshold: float = CANDIDATE_THRESHOLD,
) -> MatchResult:
    """Transcribe the name region and rank roster entries by similarity.

    Ties between equally similar roster names are never auto-matched; they
    come back as needs-review for an instructor to break.
    """
    from .errors import GradingError

    if not roster:
        raise EmptyRoster("cannot match against an empty roster")
    region = submission.resolve_name_region()
    if region is None:
        return MatchResult(submission.id, None, 0.0, MatchStatus.UNMATCHED)
    try:
        transcription = gateway.transcribe(region, context=None)
    except GradingError:
        return MatchResult(submission.id, None, 0.0, MatchStatus.UNMATCHED)
    scored = [
        (name_similarity(transcription.text, student.display_name), student)
        for student in roster
    ]
    best_score = max(score for score, _ in scored)
    best = [student for score, student in scored if score == best_score]
    tied = len(best) > 1
    candidate = min(best, key=lambda s: s.id)
    if best_score < candidate_threshold:
        return MatchResult(submission.id, None, best_score, MatchStatus.UNMATCHED)
    if best_score >= auto_threshold and not tied:
        return MatchResult(submission.id, candidate, best_score, MatchStatus.AUTO_MATCHED)
    return MatchResult(submission.id, candidate, best_score, MatchStatus.NEEDS_REVIEW)


class SubmissionMatcher:
    """Applies the duplicate-collision rule on top of raw matching.

    Submissions are matched concurrently, so auto-match claims go through a
    single-writer reservation per (assignment, student): the second claim
    on one student is downgraded to needs-review.
    """

    def __init__(
        self,
        gateway: ProviderGateway,
        auto_threshold: float = AUTO_MATCH_THRESHOLD,
        candidate_threshold: float = CANDIDATE_THRESHOLD,
    ) -> None:
        self._gateway = gateway
        self._auto_threshold = auto_threshold
        self._candidate_threshold = candidate_threshold
        self._reservations: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()

    def match(self, submission: Submission, roster: Sequence[StudentRef]) -> MatchResult:
        result = match_student(
            submission,
            roster,
            self._gateway,
            auto_threshold=self._auto_threshold,
            candidate_threshold=self._candidate_threshold,
        )
        if result.status is not MatchStatus.AUTO_MATCHED or result.candidate is None:
            return result
        key = (submission.assignment_id, result.candidate.id)
        with self._lock:
            holder = self._reservations.setdefault(key, submission.id)
        if holder != submission.id:
            return replace(result, status=MatchStatus.NEEDS_REVIEW)
        return result


def resolve_match(
    submission: Submission,
    current: MatchResult,
    student: StudentRef,
    roster: Sequence[StudentRef],
) -> tuple[Submission, MatchResult]:
    """Bind a submission to an instructor-picked student."""
    if current.status in (MatchStatus.AUTO_MATCHED, MatchStatus.RESOLVED) or submission.student:
        raise AlreadyMatched(f"submission {submission.id} is already matched")
    if all(entry.id != student.id for entry in roster):
        raise ValidationFailed(f"student {student.id} is not on the roster")
    bound = submission.with_student(student)
    return bound, MatchResult(submission.id, student, current.match_score, MatchStatus.RESOLVED)
