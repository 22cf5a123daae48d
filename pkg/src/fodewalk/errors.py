"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FodeWalkError(Exception):
    """Base class for every error raised by this package."""


class ProblemError(FodeWalkError, ValueError):
    """A problem definition violates a structural precondition."""

    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(message)
        self.row = row


class ZeroDiagonal(ProblemError):
    def __init__(self, row: int) -> None:
        super().__init__(f"diagonal entry of row {row + 1} is zero", row)


class PositiveDiagonalInSimplifiedMode(ProblemError):
    def __init__(self, row: int) -> None:
        super().__init__(
            f"diagonal entry of row {row + 1} is positive; "
            "simplified mode needs a strictly negative diagonal",
            row,
        )


class AlphaOutOfRange(ProblemError):
    def __init__(self, row: int, value: float) -> None:
        super().__init__(f"fractional exponent {value!r} of row {row + 1} is outside (0, 1)", row)


class RobinDenominatorZero(ProblemError):
    def __init__(self) -> None:
        super().__init__("Robin corner entry is singular: b1 * dx == b2")


class StructuralError(FodeWalkError, ValueError):
    """A row with no off-diagonal mass was asked for a successor."""


class MLDomainError(FodeWalkError, ValueError):
    """Mittag-Leffler parameters outside the supported domain."""


class MLEvaluationError(FodeWalkError, ArithmeticError):
    """Mittag-Leffler evaluation did not reach its accuracy target."""


class SingularHazard(FodeWalkError, ArithmeticError):
    """The hazard rate diverges (zero elapsed sojourn with alpha < 1)."""


class WalkError(FodeWalkError):
    """A walk failed; carries the stream index of the offending walk."""

    def __init__(self, stream_index: int, cause: BaseException) -> None:
        super().__init__(f"walk on stream {stream_index} failed: {cause}")
        self.stream_index = stream_index
        self.cause = cause

    def __reduce__(self):
        return (type(self), (self.stream_index, self.cause))


class SingularSystem(FodeWalkError, ArithmeticError):
    """The implicit step matrix of the deterministic solver is singular."""


class SingularCovariance(FodeWalkError, ArithmeticError):
    """Sample covariance is singular after dropping degenerate components."""
