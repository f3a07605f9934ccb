"""Exception hierarchy shared by every module."""


class MatrixInfoError(Exception):
    """Base class for all library errors."""


class NotSymmetric(MatrixInfoError, ValueError):
    pass


class NotPSD(MatrixInfoError, ValueError):
    pass


class Singular(MatrixInfoError, ValueError):
    pass


class NonConvergence(MatrixInfoError, ArithmeticError):
    pass


class InvalidOrder(MatrixInfoError, ValueError):
    pass


class DimensionMismatch(MatrixInfoError, ValueError):
    pass


class ZeroMatrix(MatrixInfoError, ValueError):
    pass


class TooFewClasses(MatrixInfoError, ValueError):
    pass


class NotPartialOrthogonal(MatrixInfoError, ValueError):
    pass


class PreconditionViolated(MatrixInfoError, ValueError):
    pass


class EmbeddingMismatch(MatrixInfoError, ValueError):
    pass


class InvalidDistribution(MatrixInfoError, ValueError):
    pass


class Diverged(MatrixInfoError, ArithmeticError):
    """Raised when a descent run produces a non-finite loss.

    The partial trajectory and the last finite iterates are attached so
    callers can still persist what was computed.
    """

    def __init__(self, iteration, trajectory=None, state=None):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration
        self.trajectory = trajectory
        self.state = state


class ParseError(MatrixInfoError, ValueError):
    """Malformed embedding or label file; message names the offset or line."""
