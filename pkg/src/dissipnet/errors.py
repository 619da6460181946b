"""Exception hierarchy shared by all modules."""


class DissipnetError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DissipnetError, ValueError):
    """Malformed arguments: wrong shapes, non-finite entries, bad parameters."""


class SingularMatrixError(DissipnetError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, rcond=None):
        super().__init__(message if rcond is None else f"{message} (rcond={rcond:.3e})")
        self.rcond = rcond


class ConditioningError(SingularMatrixError):
    """A decision variable is too ill-conditioned to extract a gain from."""


class SolverError(DissipnetError):
    """The conic solver neither solved the problem nor certified infeasibility."""

    def __init__(self, message, status=None):
        super().__init__(message if status is None else f"{message} [status={status}]")
        self.status = status


class PreconditionError(DissipnetError):
    """A documented precondition (e.g. an inertia requirement) is violated."""


class UnsupportedConfigurationError(DissipnetError):
    """The requested configuration is outside what an operation supports."""


class WellPosednessError(DissipnetError):
    """The algebraic loop ``v = M y`` with feedthrough is not well posed."""


class UnboundedDegreeError(DissipnetError):
    """The data-consistent weighted degree set is unbounded above."""


class InconsistentDataError(DissipnetError):
    """No weighted degree is consistent with the data and the noise bound."""
