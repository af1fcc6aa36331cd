"""Exception hierarchy shared by the library and the command line."""


class CMCError(Exception):
    """Base class for all errors raised by cmcfoliate."""

    exit_code = 1


class ShapeError(CMCError, ValueError):
    """Operands have incompatible variable counts, degree bounds or sizes."""


class DomainError(CMCError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class PreconditionError(CMCError, ValueError):
    pass


class ValidationError(CMCError, ValueError):
    """Input data (jets, tables, configs) violates a required invariant."""

    exit_code = 2


class ConfigError(ValidationError):
    exit_code = 2


class GeometryError(CMCError):
    """The perturbed hemisphere is no longer an embedded graph."""

    exit_code = 3


class NumericalError(CMCError):
    exit_code = 3


class SolvabilityError(CMCError):
    """Right-hand side has a component along the kernel of the Jacobi operator.

    Attributes
    ----------
    kernel_component : numpy.ndarray
        The offending projection onto the kernel, as a vector in R^n.
    """

    exit_code = 3

    def __init__(self, message, kernel_component=None):
        super().__init__(message)
        self.kernel_component = kernel_component


class NondegeneracyError(CMCError):
    """Hessian of the boundary mean curvature is singular at the center."""

    exit_code = 3


class ContinuationError(CMCError):
    """An iteration failed to converge within its budget."""

    exit_code = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientDataError(CMCError):
    exit_code = 1
