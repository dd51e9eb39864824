"""Exception hierarchy for werblock."""

from pathlib import Path


class WerBlockError(Exception):
    """Base class for every error raised by werblock."""


class ValidationError(WerBlockError):
    """Raised when input data or configuration fails validation."""

    def __init__(self, message: str, errors: list[str] | None = None) -> None:
        self.errors = list(errors or [])
        if self.errors:
            message = f"{message}:\n" + "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(message)


class ParseError(ValidationError):
    """Raised when a file line cannot be parsed."""

    def __init__(self, path: str | Path, line: int, reason: str) -> None:
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class DuplicateIdError(ValidationError):
    """Raised when an utterance id appears more than once."""

    def __init__(self, utt_id: str, where: str = "dataset") -> None:
        self.utt_id = utt_id
        super().__init__(f"duplicate utt_id '{utt_id}' in {where}")


class MissingEmbeddingError(ValidationError):
    """Raised when an evaluated utterance has no embedding row."""

    def __init__(self, utt_id: str) -> None:
        self.utt_id = utt_id
        super().__init__(f"no embedding row for utt_id '{utt_id}'")


class IdMismatchError(ValidationError):
    """Raised when transcript files do not share the same utterance ids."""

    MAX_LISTED = 10

    def __init__(self, offenders: list[str]) -> None:
        self.offenders = offenders
        listed = offenders[: self.MAX_LISTED]
        more = len(offenders) - len(listed)
        suffix = f" (and {more} more)" if more > 0 else ""
        super().__init__(
            f"utt_id mismatch across transcript files: {', '.join(listed)}{suffix}"
        )


class DegenerateVarianceError(ValidationError):
    """Raised when a variable has zero variance where a positive one is needed."""

    def __init__(self, index: int, detail: str = "zero variance") -> None:
        self.index = index
        super().__init__(f"{detail} at index {index}")


class UndefinedStatisticError(WerBlockError):
    """Raised when a WER ratio has a zero denominator."""


class InsufficientReplicatesError(WerBlockError):
    """Raised when fewer than two finite replicate values remain."""


class SolverError(WerBlockError):
    """Raised when the glasso solver breaks its own contract."""
