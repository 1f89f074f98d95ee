"""Exception types raised by the library."""

from __future__ import annotations


class LgiRandomnessError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(LgiRandomnessError, ValueError):
    """A value violates a domain invariant."""

    @classmethod
    def from_problems(cls, problems: list[str]) -> InvalidParameterError:
        return cls("; ".join(problems))


class ZeroMarginalError(LgiRandomnessError, ZeroDivisionError):
    """Conditioning on an outcome whose marginal probability vanishes."""


class TrialFileError(LgiRandomnessError):
    """A trial stream line could not be parsed."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
