"""Exception hierarchy shared by all modules."""


class SturmlogError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SturmlogError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(SturmlogError, ArithmeticError):
    """A computation could not be completed to the requested accuracy."""


class PrecisionExhausted(NumericalError):
    """Not enough guard digits remain to make a decision reliably."""

    def __init__(self, message, n=None):
        super().__init__(message)
        self.n = n


class RationalInput(ValidationError):
    """The continued fraction terminated before the requested number of terms."""

    def __init__(self, message, terms=()):
        super().__init__(message)
        self.terms = tuple(terms)


class WindowTooShort(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class DegenerateFit(ValidationError):
    pass


class TrajectoryOverflow(NumericalError, OverflowError):
    """Solution amplitudes left the representable range."""

    def __init__(self, message, n_reached):
        super().__init__(message)
        self.n_reached = n_reached


class InvalidZ(ValidationError):
    pass


class EpsilonTooSmall(InvalidZ):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, last_delta=None, depth=None):
        super().__init__(message)
        self.last_delta = last_delta
        self.depth = depth


class NearSingular(NumericalError):
    pass


class CapExceeded(NumericalError):
    def __init__(self, message, product=None):
        super().__init__(message)
        self.product = product


class DomainError(ValidationError):
    pass


class ResolutionTooCoarse(NumericalError):
    pass


class EmptyBands(ValidationError):
    pass


class BoundaryContamination(NumericalError):
    """Amplitude reached the edge of the finite box.

    ``states`` holds the valid states computed before contamination.
    """

    def __init__(self, message, time=None, states=()):
        super().__init__(message)
        self.time = time
        self.states = list(states)


class CoverageGap(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass
