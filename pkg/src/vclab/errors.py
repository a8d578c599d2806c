"""Exception types raised across the package."""


class VCError(Exception):
    """Base class for all package errors."""


class DomainError(VCError, ValueError):
    """An argument lies outside the domain of an operation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConditioningError(VCError, ArithmeticError):
    """A high-precision factorization failed; raise ``precision_bits``."""


class SingularError(VCError, ArithmeticError):
    """Two exponents coincide to working precision."""


class QuadratureError(VCError, ArithmeticError):
    """An adaptive quadrature missed its tolerance after maximal refinement."""


class BracketError(VCError, ArithmeticError):
    """No sign change or interior minimum was found in the search interval."""


class LinearSolveError(VCError, ArithmeticError):
    """The banded time-step system is singular."""


class DegenerateFitError(VCError, ValueError):
    """Least-squares abscissae coincide."""
