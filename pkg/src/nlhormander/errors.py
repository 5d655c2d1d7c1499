"""Exception hierarchy shared by all modules."""


class NLHormanderError(Exception):
    """Base class for every error raised by the package."""


class ExprSyntaxError(NLHormanderError, ValueError):
    """Malformed expression text; ``position`` is the 0-based offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(NLHormanderError, ValueError):
    """Wrong number of components in a field or model entry."""


class DomainError(NLHormanderError, ArithmeticError):
    """Expression evaluated outside its domain (log, sqrt, division)."""


class UnsupportedFormError(NLHormanderError, ValueError):
    """Symbolic operation not supported for the given expression."""


class DimensionMismatchError(NLHormanderError, ValueError):
    pass


class QuadratureError(NLHormanderError, RuntimeError):
    pass


class RootBracketError(NLHormanderError, RuntimeError):
    pass


class JumpConditionError(NLHormanderError, ArithmeticError):
    """``I + grad_x g(x, z)`` is singular, violating the (H_g°) condition."""


class KernelBoundsError(NLHormanderError, ValueError):
    """A kernel left its declared ``[1/kappa0, kappa0]`` range."""


class SchemaError(NLHormanderError, ValueError):
    """Invalid model/config file; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
