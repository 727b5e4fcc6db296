"""Exception hierarchy shared by all jumpsyn modules."""


class JumpsynError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(JumpsynError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    """A per-mode matrix does not have the declared shape."""


class GeneratorInvalid(ValidationError):
    """A transition-rate matrix violates the generator sign/row-sum rules."""


class RangeError(ValidationError):
    """A scalar parameter lies outside its admissible range."""


class IndexOutOfRange(ValidationError, IndexError):
    pass


class ParseError(JumpsynError):
    """A scenario document could not be parsed.

    ``location`` is a JSON-pointer-like path to the offending entry.
    """

    def __init__(self, message, location=""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class Reducible(JumpsynError):
    """The generator has no unique stationary distribution."""


class Infeasible(JumpsynError):
    """A conic program has no feasible point.

    ``report`` carries human-readable lines explaining why (solver status
    or structural obstruction).
    """

    def __init__(self, message, report=()):
        self.report = list(report)
        super().__init__(message)


class SolverFailure(JumpsynError):
    """The conic backend broke down numerically."""


class CertificateInvalid(JumpsynError):
    def __init__(self, message, failing=()):
        self.failing = list(failing)
        super().__init__(message)


class StepTooLarge(JumpsynError):
    pass


class NonFinite(JumpsynError, FloatingPointError):
    pass
