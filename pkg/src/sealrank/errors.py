"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SealError(Exception):
    """Base class for every error raised by sealrank."""


class UnknownTaskTypeError(SealError, ValueError):
    pass


class RubricError(SealError, ValueError):
    pass


class RenderError(SealError, KeyError):
    """A prompt template placeholder had no value in the render context."""

    def __init__(self, placeholder: str):
        super().__init__(placeholder)
        self.placeholder = placeholder

    def __str__(self) -> str:
        return f"missing placeholder value: {self.placeholder}"


class ParseError(SealError, ValueError):
    """A judge reply violated its schema. Subclasses name the violation."""


class MalformedReplyError(ParseError):
    pass


class MissingCandidateError(ParseError):
    pass


class DuplicateCandidateError(ParseError):
    pass


class UnknownCandidateError(ParseError):
    pass


class IncompleteVotesError(ParseError):
    pass


class ConfidenceRangeError(ParseError):
    pass


class UnknownIdError(ParseError):
    pass


class IdMismatchError(ParseError):
    pass


class AnchorError(ParseError):
    pass


class BackendError(SealError, RuntimeError):
    """The judge backend could not produce a reply."""


class JudgeCallError(SealError, RuntimeError):
    """A judge call failed on every allowed attempt."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class BracketError(SealError, ValueError):
    pass


class NotFinishedError(BracketError):
    pass


class AggregationError(SealError, ValueError):
    pass


class UndefinedMetricError(SealError, ValueError):
    pass


class FixtureError(SealError, ValueError):
    pass


class ConfigError(SealError, ValueError):
    pass


class ResumeConflictError(SealError, RuntimeError):
    pass
