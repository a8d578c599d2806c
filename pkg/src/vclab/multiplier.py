"""Complex-analytic machinery behind the cost bounds.

Evaluates the entire function ``Phi`` vanishing exactly at ``-i lambda_k``,
the counting function ``s(t)`` that shapes the multiplier, the logarithmic
potentials ``I(x)`` and ``G(y)``, and the explicit constants that follow from
them: ``C1 = -min I``, ``C2 = -G(y*)``, the large-time thresholds ``c_plus`` /
``c_minus`` and the small-time thresholds ``theta_plus`` / ``theta_minus``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from . import spectral
from .errors import BracketError, DomainError, QuadratureError
from .spectral import PhysicalParams

SQRT2 = math.sqrt(2.0)
COT_PI8 = 1.0 + SQRT2  # cot(pi/8)
SEC_PI8 = 1.0 / math.cos(math.pi / 8)
EPS_GUARD = 0.5

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


def _quad(f, a, b, *, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400, accept=1e-9, **kw):
    """scipy.quad that turns a missed tolerance into QuadratureError."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc).splitlines()[0]) from exc
    if err > max(accept * abs(val), 10 * epsabs):
        raise QuadratureError(f"error estimate {err:.2e} on value {val:.6e}")
    return val


def _split_quad(f, a, sing, b, **kw):
    """Integrate over ``[a, b]`` with an integrable singularity at ``sing``
    placed on panel endpoints, so no panel straddles it."""
    if sing is None or not a < sing < b:
        return _quad(f, a, b, **kw)
    return _quad(f, a, sing, **kw) + _quad(f, sing, b, **kw)


# -- Phi and its derivative ------------------------------------------------------


def _phi_arg(params: PhysicalParams, z):
    """``L * sqrt(eps^(-1/2) sqrt(i z + M^(4/3)/(4 eps^(1/3))) - (3/4) M^(2/3) eps^(-2/3))``,
    principal branches throughout."""
    eps, c, L = params.epsilon, params.mach_cbrt, params.length
    z = np.asarray(z, dtype=complex)
    inner = np.sqrt(1j * z + c**4 / (4 * eps ** (1 / 3)))
    q = inner / math.sqrt(eps) - 0.75 * c * c / eps ** (2 / 3)
    return L * np.sqrt(q)


def phi_eval(params: PhysicalParams, z):
    """``Phi(z) = sin(w) / w`` with ``w`` from :func:`_phi_arg`; ``Phi = 1`` at ``w = 0``."""
    w = _phi_arg(params, z)
    small = np.abs(w) < 1e-6
    safe = np.where(small, 1.0, w)
    val = np.where(small, 1 - w * w / 6, np.sin(safe) / safe)
    return complex(val) if val.ndim == 0 else val


def phi_derivative_at_eigen(params: PhysicalParams, k: int) -> complex:
    """Closed form ``Phi'(-i lambda_k) = i (-1)^k L^2 / (4 eps pi^2 k^2 P_k)``,
    ``P_k = k^2 pi^2 / L^2 + 3 M^(2/3) / (4 eps^(2/3))``."""
    if k < 1:
        raise DomainError("k", "must be at least 1")
    eps, c, L = params.epsilon, params.mach_cbrt, params.length
    P = (k * math.pi / L) ** 2 + 0.75 * c * c / eps ** (2 / 3)
    return 1j * (-1) ** k * L * L / (4 * eps * math.pi**2 * k * k * P)


def phi_derivative_numeric(params: PhysicalParams, k: int, rel_step: float = 1e-4) -> complex:
    """Five-point central difference of :func:`phi_eval` at ``-i lambda_k``."""
    lam = spectral.eigenvalue(params, k)
    z = -1j * lam
    h = rel_step * lam
    f = lambda s: phi_eval(params, z + s)  # noqa: E731
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


def phi_derivative_inverse_bound(params: PhysicalParams, k: int) -> float:
    """Upper bound ``4 eps^(1/3) pi^2 k^2 (pi^2 k^2 / L^2 + (3/4) M^(2/3))`` on ``1/|Phi'(-i lambda_k)|``."""
    eps, c, L = params.epsilon, params.mach_cbrt, params.length
    return 4 * eps ** (1 / 3) * math.pi**2 * k * k * ((k * math.pi / L) ** 2 + 0.75 * c * c)


def phi_modulus_bound(params: PhysicalParams, z):
    eps, c, L = params.epsilon, abs(params.mach_cbrt), params.length
    z = np.asarray(z, dtype=complex)
    growth = (L / SQRT2) * (1 / SQRT2 + math.sqrt(3) / 2) * c / eps ** (1 / 3)
    spread = L / (SQRT2 * eps**0.25) * np.abs(z) ** 0.25
    return np.exp(growth + spread) / np.abs(_phi_arg(params, z))


def zero_defect(params: PhysicalParams, k: int) -> float:
    """``|Phi(-i lambda_k)|`` measured against ``|Phi'| lambda_k``: the relative
    displacement of the k-th zero."""
    lam = spectral.eigenvalue(params, k)
    return abs(phi_eval(params, -1j * lam)) / (abs(phi_derivative_at_eigen(params, k)) * lam)


# -- the counting function s(t) --------------------------------------------------


@dataclass(frozen=True)
class MultiplierParams:
    params: PhysicalParams
    alpha: float
    tau: float
    a: float
    Ltilde: float
    Lhat: float
    A: float
    B: float


def default_alpha(params: PhysicalParams) -> float:
    T, L = params.horizon, params.length
    floor = 2 ** -0.25 * (1 + SQRT2) ** 1.5 * math.factorial(8) ** 0.375 * T - L
    return max(1.0, floor) + 1.0


def default_tau(params: PhysicalParams) -> float:
    T = params.horizon
    tau = 0.01 * T
    threshold = (threshold_root("plus") if params.mach > 0 else threshold_root("minus"))
    slack = T - threshold * params.length / abs(params.mach)
    if slack > 0:
        tau = min(tau, 0.5 * slack)
    return tau


def make_multiplier_params(params: PhysicalParams, alpha: float | None = None,
                           tau: float | None = None) -> MultiplierParams:
    alpha = default_alpha(params) if alpha is None else alpha
    tau = default_tau(params) if tau is None else tau
    if not alpha > 0:
        raise DomainError("alpha", "must be positive")
    if not 0 < tau < params.horizon:
        raise DomainError("tau", f"must lie in (0, {params.horizon})")
    eps, L, T = params.epsilon, params.length, params.horizon
    a = (T - tau) / (2 * math.pi)
    Lt = (L + alpha * eps**0.25) / math.sqrt(2 + SQRT2)
    Lh = SEC_PI8 / SQRT2 * Lt + alpha * eps**0.25
    A = (Lt / (2 * SQRT2 * (T - tau) * COT_PI8)) ** (4 / 3) * eps ** (-1 / 3)
    B = (2 * Lt / (SQRT2 * (T - tau) * COT_PI8)) ** (4 / 3) * eps ** (-1 / 3)
    return MultiplierParams(params, alpha, tau, a, Lt, Lh, A, B)


def _s_coeff(mp_: MultiplierParams) -> float:
    return mp_.Ltilde / (SQRT2 * math.pi * COT_PI8) / mp_.params.epsilon**0.25


def s_eval(mp_: MultiplierParams, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t", "must be positive")
    val = mp_.a * t - _s_coeff(mp_) * t**0.25
    return float(val) if val.ndim == 0 else val


def s_derivative(mp_: MultiplierParams, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t", "must be positive")
    val = mp_.a - 0.25 * _s_coeff(mp_) * t**-0.75
    return float(val) if val.ndim == 0 else val


def log_potential_of_s(mp_: MultiplierParams, x: float) -> float:
    """Closed form ``int_0^inf log|1 - x^2/t^2| ds(t) = -Ltilde |x|^(1/4) / (sqrt(2) eps^(1/4))``."""
    return -mp_.Ltilde / (SQRT2 * mp_.params.epsilon**0.25) * abs(x) ** 0.25


# -- logarithmic integral identities -------------------------------------------


def log_identity_quadrature(gamma: float, x: float) -> float:
    """``int_0^inf log|1 - x^2/t^2| d(t^gamma)`` via ``w = t^gamma``."""
    if not 0 < gamma < 2:
        raise DomainError("gamma", "must lie in (0, 2)")
    if x == 0:
        return 0.0
    x2 = x * x
    w0 = abs(x) ** gamma
    f = lambda w: math.log(abs(1 - x2 * w ** (-2 / gamma)))  # noqa: E731
    head = _split_quad(f, 0.0, w0, 2 * w0)
    # w = 2 w0 s^(-p) maps the slowly decaying tail onto (0, 1] with a bounded integrand
    p = gamma / (2 - gamma) + 1
    g = lambda s: (math.log1p(-x2 * (2 * w0) ** (-2 / gamma) * s ** (2 * p / gamma))  # noqa: E731
                   * 2 * w0 * p * s ** (-p - 1)) if s > 0 else 0.0
    tail = _quad(g, 0.0, 1.0)
    return head + tail


def log_identity_closed_form(gamma: float, x: float) -> float:
    return abs(x) ** gamma * math.pi / math.tan(math.pi * gamma / 2)


def _relative_or_absolute(approx, exact):
    scale = abs(exact)
    return abs(approx - exact) / scale if scale > 1e-12 else abs(approx - exact)


def verify_log_identity(gamma: float, x: float) -> float:
    """Relative error (absolute when the closed form vanishes)."""
    return _relative_or_absolute(log_identity_quadrature(gamma, x), log_identity_closed_form(gamma, x))


def csc_identity_quadrature(y: float) -> float:
    """``int_0^inf log(1 + y^2/t^2) d(t^(1/4))``."""
    if y == 0:
        raise DomainError("y", "must be nonzero")
    y2 = y * y
    f = lambda w: math.log1p(y2 * w**-8)  # noqa: E731
    w0 = abs(y) ** 0.25
    return _quad(f, 0.0, w0) + _quad(f, w0, math.inf)


def verify_csc_identity(y: float) -> float:
    exact = math.pi / math.sin(math.pi / 8) * abs(y) ** 0.25
    return _relative_or_absolute(csc_identity_quadrature(y), exact)


def linear_identity_quadrature(y: float) -> float:
    """``int_0^inf log(1 + y^2/t^2) dt``; equals ``pi |y|``."""
    y2 = y * y
    f = lambda t: math.log1p(y2 / (t * t)) if t > 0 else math.inf  # noqa: E731
    w0 = abs(y)
    return _quad(f, 0.0, w0) + _quad(f, w0, math.inf)


def verify_linear_identity(y: float) -> float:
    return _relative_or_absolute(linear_identity_quadrature(y), math.pi * abs(y))


# -- I(x), G(y) and the constants -----------------------------------------------


def I_quadrature(x: float) -> float:
    """``I(x) = int_0^1 log|1 - x^2/t^2| d(t - t^(1/4))`` with ``t = u^4``."""
    x = abs(x)
    if x == 0:
        return 0.0
    x2 = x * x
    f = lambda u: math.log(abs(1 - x2 / u**8)) * (4 * u**3 - 1) if u > 0 else 0.0  # noqa: E731
    r = x**0.25
    return _split_quad(f, 0.0, r if r < 1 else None, 1.0)


def I_closed_form(x: float) -> float:
    """Elementary antiderivative of ``I``, valid for ``x > 0``, ``x != 1``."""
    x = abs(x)
    r = x**0.25
    p = r / SQRT2
    return (
        x * math.log(abs((x + 1) / (x - 1)))
        - (1 + SQRT2) * math.pi * r
        + r * math.log(abs((r - 1) / (r + 1)))
        + 2 * r * math.atan(r)
        + r / SQRT2 * math.log((r * r - SQRT2 * r + 1) / (r * r + SQRT2 * r + 1))
        + SQRT2 * r * (math.atan2(p, 1 - p) + math.atan2(p, 1 + p))
    )


def G_eval(y: float, method: str = "substituted") -> float:
    """``G(y) = int_0^1 log(1 + y^2/t^2) d(t - t^(1/4))``.

    ``method="substituted"`` integrates in ``u = t^(1/4)``; ``method="split"``
    integrates the ``dt`` and ``d(t^(1/4))`` parts separately in ``t``, the
    latter with an algebraic endpoint weight.
    """
    if y == 0:
        return 0.0
    y2 = y * y
    if method == "substituted":
        f = lambda u: (math.log(u**8 + y2) - 8 * math.log(u)) * (4 * u**3 - 1) if u > 0 else 0.0  # noqa: E731
        return _quad(f, 0.0, 1.0)
    if method == "split":
        g = lambda t: math.log(t * t + y2) - 2 * math.log(t) if t > 0 else 0.0  # noqa: E731
        first = _quad(g, 0.0, 1.0)
        second = _quad(g, 0.0, 1.0, weight="alg", wvar=(-0.75, 0.0))
        return first - 0.25 * second
    raise DomainError("method", f"unknown method {method!r}")


C2_ARGUMENT = (1 + SQRT2) ** 2 * 2 ** (-5 / 3) * 5


@lru_cache(maxsize=None)
def C1_minimizer(scan_max: float = 4.0, scan_points: int = 80) -> tuple[float, float]:
    """``(x*, I(x*))``: coarse scan for a bracket, then golden-section search."""
    xs = np.linspace(scan_max / scan_points, scan_max, scan_points)
    vals = []
    for x in xs:
        try:
            vals.append(I_quadrature(x))
        except QuadratureError:
            # x on the log singularity of x log|(x+1)/(x-1)|
            vals.append(math.inf)
    i = int(np.argmin(vals))
    if i == 0 or i == len(xs) - 1:
        raise BracketError(f"minimum of I sits at scan edge x={xs[i]}")
    res = optimize.minimize_scalar(I_quadrature, bracket=(xs[i - 1], xs[i], xs[i + 1]),
                                   method="golden", tol=1e-10)
    if not xs[i - 1] < res.x < xs[i + 1]:
        raise BracketError("golden-section search left its bracket")
    return float(res.x), float(res.fun)


def compute_C1() -> float:
    return -C1_minimizer()[1]


@lru_cache(maxsize=None)
def compute_C2() -> float:
    return -G_eval(C2_ARGUMENT)


_THRESHOLD_LEAD = {"plus": 1.0, "minus": 2.0}


def threshold_polynomial(case: str, X: float, C1: float | None = None, C2: float | None = None) -> float:
    """``(lead + sqrt(3/2) + 5^(1/4)/(1+sqrt 2)) X + 2^(1/3)(C1-C2)/((1+sqrt 2)^2 pi) - (5/8) X^4``
    with ``lead = 1`` for ``M > 0`` and ``2`` for ``M < 0``."""
    if case not in _THRESHOLD_LEAD:
        raise DomainError("case", "must be 'plus' or 'minus'")
    C1 = compute_C1() if C1 is None else C1
    C2 = compute_C2() if C2 is None else C2
    coeff = _THRESHOLD_LEAD[case] + math.sqrt(3) / SQRT2 + 5**0.25 / (1 + SQRT2)
    const = 2 ** (1 / 3) * (C1 - C2) / ((1 + SQRT2) ** 2 * math.pi)
    return coeff * X + const - 0.625 * X**4


@lru_cache(maxsize=None)
def threshold_root(case: str) -> float:
    """``c = X*^3`` for the positive root ``X*`` of :func:`threshold_polynomial`."""
    C1, C2 = compute_C1(), compute_C2()
    f = lambda X: threshold_polynomial(case, X, C1, C2)  # noqa: E731
    lo, hi = 0.5, 5.0
    if not f(lo) > 0 > f(hi):
        raise BracketError(f"no sign change of the threshold polynomial on [{lo}, {hi}]")
    X = optimize.bisect(f, lo, hi, xtol=1e-12, rtol=1e-15, maxiter=200)
    return X**3


# -- small-time side --------------------------------------------------------------

_RESIDUE_QUARTIC = {"plus": 5 / 9, "minus": 5 / 18}


def residue_closed_form(case: str) -> float:
    if case == "plus":
        return 3 * math.pi / 5 * (math.sqrt(3 * (3 + 2 * math.sqrt(5))) - 3)
    if case == "minus":
        return 6 * math.pi / 5 * (math.sqrt(3 * (3 + math.sqrt(10))) - 3)
    raise DomainError("case", "must be 'plus' or 'minus'")


@dataclass(frozen=True)
class ResidueCheck:
    quadrature: float
    closed_form: float

    @property
    def rel_error(self) -> float:
        return abs(self.quadrature - self.closed_form) / abs(self.closed_form)


def residue_integral(case: str) -> ResidueCheck:
    """``int_R (2x^2+1) / ((x^4+x^2+q)(x^2+1)) dx`` on ``[0, 1]`` plus the
    ``x -> 1/x`` image of ``[1, inf)``, doubled by evenness."""
    closed = residue_closed_form(case)
    q = _RESIDUE_QUARTIC[case]
    f = lambda x: (2 * x * x + 1) / ((x**4 + x * x + q) * (x * x + 1))  # noqa: E731
    g = lambda v: f(1 / v) / (v * v) if v > 0 else 0.0  # noqa: E731
    half = _quad(f, 0.0, 1.0) + _quad(g, 0.0, 1.0)
    return ResidueCheck(2 * half, closed)


def small_time_threshold(case: str) -> float:
    """``theta_plus = 8 C^/(5 sqrt 6) - 4/5`` or ``theta_minus = 16 C~/(5 sqrt 6)``."""
    if case == "plus":
        Chat = math.sqrt(3 * (3 + 2 * math.sqrt(5))) - 3
        return 8 * Chat / (5 * math.sqrt(6)) - 0.8
    if case == "minus":
        Ctil = math.sqrt(3 * (3 + math.sqrt(10))) - 3
        return 16 * Ctil / (5 * math.sqrt(6))
    raise DomainError("case", "must be 'plus' or 'minus'")


def lower_bound_rate(params: PhysicalParams) -> tuple[float, float]:
    """``(rate, threshold)``: ``K >= C exp(rate eps^(-1/3))`` with
    ``rate = (5 M^(1/3)/8)(theta_plus L - T M)`` for ``M > 0`` and
    ``(5 |M|^(1/3)/16)(theta_minus L - T |M|)`` for ``M < 0``.
    The rate is positive iff ``T < threshold * L / |M|``."""
    L, T, M = params.length, params.horizon, params.mach
    c = abs(params.mach_cbrt)
    if M > 0:
        theta = small_time_threshold("plus")
        return 5 * c / 8 * (theta * L - T * M), theta
    theta = small_time_threshold("minus")
    return 5 * c / 16 * (theta * L - T * abs(M)), theta


def conjugate_mode_norm(params: PhysicalParams) -> float:
    """``||exp(M^(1/3) x / (2 eps^(1/3))) sin(pi x / L)||`` in closed form,
    ``sqrt(2 (eps/M)^(1/3) (exp(pi a) - 1) / (a^2 + 4))`` with ``a = M^(1/3) L / (pi eps^(1/3))``."""
    c, eps, L = params.mach_cbrt, params.epsilon, params.length
    a = c * L / (math.pi * eps ** (1 / 3))
    if abs(a) < 1e-8:
        return math.sqrt(L / 2)
    sq = 2 * (eps ** (1 / 3) / c) * math.expm1(math.pi * a) / (a * a + 4)
    return math.sqrt(sq)


# -- the Phi-part of the biorthogonal bound ---------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    worst_ratio: float
    worst_x: float


def phi_quotient(params: PhysicalParams, k: int, x):
    """``|Phi(x) / (Phi'(-i lambda_k)(x + i lambda_k))|`` on the real line."""
    lam = spectral.eigenvalue(params, k)
    x = np.asarray(x, dtype=float)
    return np.abs(phi_eval(params, x) / (phi_derivative_at_eigen(params, k) * (x + 1j * lam)))


def phi_quotient_envelope(params: PhysicalParams, k: int, x):
    lam = spectral.eigenvalue(params, k)
    x = np.asarray(x, dtype=float)
    return phi_modulus_bound(params, x) * phi_derivative_inverse_bound(params, k) / np.sqrt(x * x + lam * lam)


def burda_exponent(mp_: MultiplierParams, k: int) -> float:
    """``-pi a lambda_k + Lhat lambda_k^(1/4) / eps^(1/4)``."""
    lam = spectral.eigenvalue(mp_.params, k)
    return -math.pi * mp_.a * lam + mp_.Lhat * lam**0.25 / mp_.params.epsilon**0.25


def log_burda_envelope(mp_: MultiplierParams, k: int, x):
    """``log(k^4 exp(burda_exponent) / |x^2 + lambda_k^2|^(1/2))`` (unit constant)."""
    lam = spectral.eigenvalue(mp_.params, k)
    x = np.asarray(x, dtype=float)
    return 4 * math.log(k) + burda_exponent(mp_, k) - 0.5 * np.log(x * x + lam * lam)


def burda_envelope(mp_: MultiplierParams, k: int, x):
    """Exponential of :func:`log_burda_envelope`; overflows to inf for the default alpha."""
    with np.errstate(over="ignore"):
        return np.exp(log_burda_envelope(mp_, k, x))


def burda_bound_check(params: PhysicalParams, mp_: MultiplierParams | None, k: int, x_samples) -> BoundCheck:
    """Check ``|Phi(x)/(Phi'(-i lambda_k)(x + i lambda_k))|`` against the envelope
    built from the modulus bound on ``Phi`` and the bound on ``1/|Phi'|``."""
    if params.epsilon > EPS_GUARD:
        raise DomainError("epsilon", f"multiplier checks assume eps <= {EPS_GUARD}")
    if not 1 <= k <= 10:
        raise DomainError("k", "must lie in 1..10")
    x = np.asarray(x_samples, dtype=float)
    ratio = phi_quotient(params, k, x) / phi_quotient_envelope(params, k, x)
    i = int(np.argmax(ratio))
    return BoundCheck(bool(np.all(ratio <= 1.0)), float(ratio[i]), float(x[i]))


@dataclass(frozen=True)
class AnalyticConstants:
    C1: float
    C2: float
    c_plus: float
    c_minus: float
    lower_plus: float
    lower_minus: float


def analytic_constants() -> AnalyticConstants:
    return AnalyticConstants(
        compute_C1(), compute_C2(), threshold_root("plus"), threshold_root("minus"),
        small_time_threshold("plus"), small_time_threshold("minus"),
    )
