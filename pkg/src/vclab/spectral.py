"""Closed-form spectral data of the adjoint spatial operator.

The adjoint operator on ``(0, L)`` is

    P = eps * d^4 + 2 eps^(2/3) M^(1/3) d^3 - M d

with ``phi = 0`` and ``eps phi'' - (delta/2) phi' = 0`` at both ends.  Its
eigenfunctions are exponentially tilted sines

    e_k(x) = exp(-b x) sin(k pi x / L),   b = M^(1/3) / (2 eps^(1/3)),

and the forward (control) operator has the same eigenvalues with the
conjugate modes ``exp(+b x) sin(k pi x / L)``.  ``M^(1/3)`` is always the real
cube root, so everything stays real for either sign of ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy import integrate

from .errors import DomainError

DEFAULT_MODES = 16


def real_cbrt(x):
    """Sign-preserving cube root, for floats and mpmath numbers."""
    if isinstance(x, mp.mpf):
        return mp.cbrt(x) if x >= 0 else -mp.cbrt(-x)
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


@dataclass(frozen=True)
class PhysicalParams:
    epsilon: float
    mach: float
    length: float
    horizon: float
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "delta", -2.0 * self.epsilon ** (2.0 / 3.0) * real_cbrt(self.mach)
        )

    @property
    def mach_cbrt(self) -> float:
        return real_cbrt(self.mach)

    @property
    def weight_rate(self) -> float:
        """Decay rate ``b`` of the tilt ``exp(-b x)`` carried by every e_k."""
        return self.mach_cbrt / (2.0 * self.epsilon ** (1.0 / 3.0))

    def replace(self, **changes) -> "PhysicalParams":
        values = dict(
            epsilon=self.epsilon, mach=self.mach, length=self.length, horizon=self.horizon
        )
        values.update(changes)
        return make_params(**values)


def make_params(epsilon, mach, length, horizon) -> PhysicalParams:
    for name, value in (("epsilon", epsilon), ("length", length), ("horizon", horizon)):
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(name, f"must be positive and finite, got {value!r}")
    if mach == 0 or not math.isfinite(mach):
        raise DomainError("mach", f"must be nonzero and finite, got {mach!r}")
    return PhysicalParams(float(epsilon), float(mach), float(length), float(horizon))


@dataclass(frozen=True)
class Eigenpair:
    index: int
    lam: float
    weight_rate: float


@dataclass(frozen=True)
class DualExpansion:
    """``matrix[j-1, k-1] = int_0^L e_k(x) sin(j pi x / L) dx``."""

    order: int
    matrix: np.ndarray


def _check_index(k):
    if int(k) != k or k < 1:
        raise DomainError("k", f"mode index must be a positive integer, got {k!r}")


def eigenvalue(params: PhysicalParams, k: int) -> float:
    """lambda_k = eps (k^2 pi^2/L^2 + 3 M^(2/3) / (4 eps^(2/3)))^2 - M^(4/3) / (4 eps^(1/3)).

    Evaluated in the expanded form
    ``eps w^4 + (3/2) eps^(1/3) M^(2/3) w^2 + (5/16) M^(4/3) eps^(-1/3)``
    (``w = k pi / L``), which avoids the cancellation of the squared form.
    """
    _check_index(k)
    eps, c = params.epsilon, params.mach_cbrt
    w2 = (k * math.pi / params.length) ** 2
    e13 = eps ** (1.0 / 3.0)
    return eps * w2 * w2 + 1.5 * e13 * c * c * w2 + (5.0 / 16.0) * c**4 / e13


def eigenvalues(params: PhysicalParams, n: int) -> np.ndarray:
    return np.array([eigenvalue(params, k) for k in range(1, n + 1)])


def eigenvalues_mp(params: PhysicalParams, n: int) -> list:
    """First ``n`` eigenvalues at the current mpmath working precision."""
    eps = mp.mpf(params.epsilon)
    c = real_cbrt(mp.mpf(params.mach))
    L = mp.mpf(params.length)
    e13 = mp.cbrt(eps)
    out = []
    for k in range(1, n + 1):
        w2 = (k * mp.pi / L) ** 2
        out.append(eps * w2 * w2 + mp.mpf(3) / 2 * e13 * c * c * w2 + mp.mpf(5) / 16 * c**4 / e13)
    return out


def eigenpair(params: PhysicalParams, k: int) -> Eigenpair:
    return Eigenpair(k, eigenvalue(params, k), params.weight_rate)


def eigenfunction_eval(params: PhysicalParams, k: int, x):
    _check_index(k)
    L = params.length
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > L):
        raise DomainError("x", f"must lie in [0, {L}]")
    val = np.exp(-params.weight_rate * xa) * np.sin(k * np.pi * xa / L)
    # sin(k pi) is not exactly zero in floating point
    val = np.where((xa == 0) | (xa == L), 0.0, val)
    return float(val) if val.ndim == 0 else val


def conjugate_mode_eval(params: PhysicalParams, k: int, x):
    """Forward-operator eigenmode ``exp(+b x) sin(k pi x / L)``."""
    _check_index(k)
    L = params.length
    xa = np.asarray(x, dtype=float)
    val = np.exp(params.weight_rate * xa) * np.sin(k * np.pi * xa / L)
    val = np.where((xa == 0) | (xa == L), 0.0, val)
    return float(val) if val.ndim == 0 else val


def eigenfunction_derivative_at_zero(params: PhysicalParams, k: int) -> float:
    _check_index(k)
    return k * math.pi / params.length


def weighted_inner_product(params: PhysicalParams, u_samples, v_samples, grid) -> float:
    """Simpson approximation of ``int_0^L exp(2 b x) u v dx`` on sampled data."""
    u = np.asarray(u_samples, dtype=float)
    v = np.asarray(v_samples, dtype=float)
    x = np.asarray(grid, dtype=float)
    if not (u.shape == v.shape == x.shape):
        raise DomainError("samples", f"shape mismatch {u.shape}, {v.shape}, {x.shape}")
    if x.size < 3:
        raise DomainError("grid", "need at least three nodes")
    L = params.length
    if abs(x[0]) > 1e-12 * L or abs(x[-1] - L) > 1e-12 * L:
        raise DomainError("grid", f"must cover [0, {L}]")
    w = np.exp(2.0 * params.weight_rate * x)
    return float(integrate.simpson(w * u * v, x=x))


# -- tilted sine integrals ---------------------------------------------------


def _cos_moment(b, m, L):
    """int_0^L exp(-b x) cos(m pi x / L) dx for integer m."""
    sign = -1.0 if m % 2 else 1.0
    if m == 0:
        if b == 0:
            return L
        return -math.expm1(-b * L) / b
    w = m * math.pi / L
    return b * (1.0 - sign * math.exp(-b * L)) / (b * b + w * w)


def tilted_sine_integral(b, j, k, L):
    """int_0^L exp(-b x) sin(j pi x / L) sin(k pi x / L) dx, closed form."""
    return 0.5 * (_cos_moment(b, abs(j - k), L) - _cos_moment(b, j + k, L))


def _cos_moment_mp(b, m, L):
    if m == 0:
        if b == 0:
            return L
        return -mp.expm1(-b * L) / b
    sign = -1 if m % 2 else 1
    w = m * mp.pi / L
    return b * (1 - sign * mp.exp(-b * L)) / (b * b + w * w)


def tilted_sine_matrix_mp(b, n, L):
    """mpmath version of :func:`tilted_sine_integral` for all ``j, k <= n``."""
    out = mp.matrix(n, n)
    for j in range(1, n + 1):
        for k in range(j, n + 1):
            v = (_cos_moment_mp(b, k - j, L) - _cos_moment_mp(b, j + k, L)) / 2
            out[j - 1, k - 1] = v
            out[k - 1, j - 1] = v
    return out


def dual_expansion(params: PhysicalParams, n: int = DEFAULT_MODES) -> DualExpansion:
    if n < 1:
        raise DomainError("n", "order must be at least 1")
    b, L = params.weight_rate, params.length
    E = np.empty((n, n))
    for j in range(1, n + 1):
        for k in range(j, n + 1):
            E[j - 1, k - 1] = E[k - 1, j - 1] = tilted_sine_integral(b, j, k, L)
    return DualExpansion(n, E)


def eigenfunction_l2_norm(params: PhysicalParams, k: int) -> float:
    """Exact ``||e_k||`` in plain L^2(0, L)."""
    _check_index(k)
    return math.sqrt(tilted_sine_integral(2.0 * params.weight_rate, k, k, params.length))


def eigenfunction_gram(params: PhysicalParams, n: int) -> np.ndarray:
    """Plain L^2 Gram matrix ``int e_j e_k``; the e_k are not L^2-orthogonal."""
    b2, L = 2.0 * params.weight_rate, params.length
    H = np.empty((n, n))
    for j in range(1, n + 1):
        for k in range(j, n + 1):
            H[j - 1, k - 1] = H[k - 1, j - 1] = tilted_sine_integral(b2, j, k, L)
    return H


def norm_bound_ratio(params: PhysicalParams, k: int) -> float:
    """``||e_k|| / exp(|M|^(1/3) L / (2 eps^(1/3)))``; bounded in k for M < 0."""
    scale = abs(params.mach_cbrt) * params.length / (2.0 * params.epsilon ** (1.0 / 3.0))
    return eigenfunction_l2_norm(params, k) / math.exp(scale)


# -- finite-difference check of the eigen-relation ---------------------------

STENCIL_ORDER = 2


def apply_operator_residual(params: PhysicalParams, k: int, grid_spacing: float) -> float:
    """max over interior nodes of ``|P e_k - lambda_k e_k|`` with centred stencils.

    d/dx and d^3/dx^3 use fourth-order stencils, d^4/dx^4 the five-point
    second-order one, so the residual decays like ``h^2``.
    """
    _check_index(k)
    L = params.length
    n = int(round(L / grid_spacing))
    if n < 8:
        raise DomainError("grid_spacing", f"too coarse: {n} cells on [0, {L}]")
    h = L / n
    x = np.linspace(0.0, L, n + 1)
    f = eigenfunction_eval(params, k, x)
    i = np.arange(3, n - 2)
    fm3, fm2, fm1, f0, fp1, fp2, fp3 = (f[i + s] for s in (-3, -2, -1, 0, 1, 2, 3))
    d1 = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h)
    d3 = (-fp3 + 8 * fp2 - 13 * fp1 + 13 * fm1 - 8 * fm2 + fm3) / (8 * h**3)
    d4 = (fp2 - 4 * fp1 + 6 * f0 - 4 * fm1 + fm2) / h**4
    eps, c = params.epsilon, params.mach_cbrt
    Pf = eps * d4 + 2 * eps ** (2.0 / 3.0) * c * d3 - params.mach * d1
    return float(np.max(np.abs(Pf - eigenvalue(params, k) * f0)))
