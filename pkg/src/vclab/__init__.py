"""Numerical laboratory for the null controllability of a vanishing-viscosity
fourth-order transport equation with a boundary flux control.

Modules: :mod:`spectral` (closed-form eigen-data), :mod:`moments`
(high-precision moment problem and cost estimator), :mod:`multiplier`
(complex-analytic constants), :mod:`pde` (finite-difference solvers),
:mod:`experiments` and :mod:`cli` (drivers).
"""

from .errors import (BracketError, ConditioningError, DegenerateFitError, DomainError,
                     LinearSolveError, QuadratureError, SingularError, VCError)
from .spectral import PhysicalParams, make_params

__all__ = [
    "BracketError", "ConditioningError", "DegenerateFitError", "DomainError",
    "LinearSolveError", "QuadratureError", "SingularError", "VCError",
    "PhysicalParams", "make_params",
]
__version__ = "0.1.0"
