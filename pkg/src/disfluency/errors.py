"""Exception hierarchy shared across the package.

Every error a caller is expected to handle derives from DisfluencyError, so
the CLI can map failures to exit codes without chasing bare ValueErrors.
"""

from __future__ import annotations


class DisfluencyError(Exception):
    """Base class for all package errors."""


class FormatError(DisfluencyError):
    """Malformed record in a corpus or lexicon file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class LengthMismatchError(FormatError):
    """Token and label counts differ within one sentence."""


class AlignmentError(DisfluencyError):
    """Aligned sequences disagree (pair recovery or per-token comparison)."""


class RangeError(DisfluencyError):
    """A count or index is outside its allowed range."""


class PreconditionError(DisfluencyError):
    """Input does not satisfy an operation's precondition."""


class LexiconError(DisfluencyError):
    """A required lexicon list is missing or empty."""


class BudgetUnreachableError(DisfluencyError):
    """The requested disfluent-token budget cannot be met.

    Carries the fraction that was actually achieved so callers can report it.
    """

    def __init__(self, target: float, achieved: float, max_injections: int):
        self.target = target
        self.achieved = achieved
        self.max_injections = max_injections
        super().__init__(
            f"budget {target:.3f} unreachable within {max_injections} injections "
            f"per sentence (achieved {achieved:.3f})"
        )


class ShapeError(DisfluencyError):
    """Tensor operands have incompatible shapes."""


class NumericError(DisfluencyError):
    """A computed value is non-finite."""


class EmptyBatchError(DisfluencyError):
    """A loss was requested over an empty batch."""


class VocabMismatchError(DisfluencyError):
    """Checkpoint was trained with a different vocabulary."""
