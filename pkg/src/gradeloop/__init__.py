"""Human-in-the-loop AI grading for scanned assessments.

Scans come in, a vision-capable model transcribes and grades them against
instructor rubrics, confident results are accepted, uncertain ones are
routed to human reviewers, and instructor corrections are distilled into
reusable grading guidance. Scores are exact rationals end to end.
"""

from .errors import GradingError
from .model import (
    Assignment,
    ConfidenceTier,
    Course,
    Question,
    QuestionFormat,
    StudentRef,
    Submission,
)
from .pipeline import GradeRecord, GradingPipeline, GradingRun
from .review import ConfidencePolicy, ReviewQueue, build_review_queue
from .rubric import Rubric, RubricItem, RubricScheme, compute_score
from .service import create_app
from .store import DocumentStore

__all__ = [
    "Assignment",
    "ConfidencePolicy",
    "ConfidenceTier",
    "Course",
    "DocumentStore",
    "GradeRecord",
    "GradingError",
    "GradingPipeline",
    "GradingRun",
    "Question",
    "QuestionFormat",
    "ReviewQueue",
    "Rubric",
    "RubricItem",
    "RubricScheme",
    "StudentRef",
    "Submission",
    "build_review_queue",
    "compute_score",
    "create_app",
]
