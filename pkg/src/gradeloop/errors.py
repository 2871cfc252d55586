"""Exception hierarchy. The HTTP layer maps these onto status codes."""

from __future__ import annotations


class GradingError(Exception):
    """Base class for all domain errors raised by this package."""


class ValidationFailed(GradingError):
    """Input data violates an entity invariant."""


class UnknownEntity(GradingError):
    """Referenced id does not exist in the store."""


class VersionConflict(GradingError):
    """Optimistic-concurrency write against a stale version."""


class StateConflict(GradingError):
    """Operation not legal in the entity's current state."""


# rubric-engine
class UnknownRubricItem(ValidationFailed):
    """A selection references an item id absent from the rubric."""


class FormatUnsupported(ValidationFailed):
    """Operation does not apply to this question format."""


# provider-gateway
class ProviderUnavailable(GradingError):
    """Transient provider failure; retryable."""


class MalformedProviderOutput(GradingError):
    """Provider returned output violating its contract; not retryable."""


# ingestion
class PageCountMismatch(ValidationFailed):
    pass


class EmptyRoster(ValidationFailed):
    pass


class AlreadyMatched(StateConflict):
    pass


# grading-pipeline
class RunAlreadyActive(StateConflict):
    pass


class RunNotCompleted(StateConflict):
    pass


# calibration
class NoCompletedRun(StateConflict):
    pass


class NotInSample(ValidationFailed):
    pass


class SessionClosed(StateConflict):
    pass


class NoCorrections(StateConflict):
    pass


# review-router
class UnknownRecord(UnknownEntity):
    pass


class GradingIncomplete(StateConflict):
    pass


# analytics
class ZeroTotal(ValidationFailed):
    pass
