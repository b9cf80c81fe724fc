"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SignIdError(Exception):
    """Base class for all errors raised by signid."""


class SingularMatrix(SignIdError):
    pass


class SingularLyapunov(SignIdError):
    """The vectorized Lyapunov operator is singular (some eigenvalue pair sums to zero)."""


class UnknownNode(SignIdError, KeyError):
    pass


class UnknownEdge(SignIdError, KeyError):
    pass


class GraphFormatError(SignIdError, ValueError):
    pass


class LatentNodesPresent(SignIdError):
    pass


class DimensionMismatch(SignIdError, ValueError):
    pass


class NotHurwitz(SignIdError):
    pass


class NotMFaithful(SignIdError):
    def __init__(self, message: str, pairs: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.pairs = pairs or []


class ResampleBudgetExhausted(SignIdError):
    def __init__(self, message: str, hurwitz_rejections: int, faithfulness_rejections: int):
        super().__init__(message)
        self.hurwitz_rejections = hurwitz_rejections
        self.faithfulness_rejections = faithfulness_rejections


class NumericalBreakdown(SignIdError):
    pass


class InconsistentInput(SignIdError):
    pass


class ZeroDenominatorEntry(SignIdError):
    pass


class CovarianceFormatError(SignIdError, ValueError):
    pass
