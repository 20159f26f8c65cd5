"""Exception types raised across the package."""

from __future__ import annotations


class PhraseBoostError(Exception):
    """Base class for all phraseboost errors."""


class VocabularyError(PhraseBoostError):
    """Invalid vocabulary file or symbol lookup failure."""


class TokenizationError(PhraseBoostError):
    """Text could not be mapped to token ids."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmissionFormatError(PhraseBoostError):
    """Malformed or non-normalized emission tensor file."""


class TableFormatError(PhraseBoostError):
    """Malformed, truncated, or invariant-violating boost table file."""


class StepModelError(PhraseBoostError):
    """Invalid step-model specification."""


class BenchError(PhraseBoostError):
    """Benchmark aborted; carries the timings collected so far."""

    def __init__(self, message: str, times: list[float] | None = None):
        super().__init__(message)
        self.times = times or []
