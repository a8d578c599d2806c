"""Finite-section moment problem and the controllability cost estimator.

A control ``u`` null-controls the first ``N`` modes of ``y0`` iff

    int_0^T u(t) exp(-lambda_k (T - t)) dt = d_k,    k = 1..N,

with ``d_k = (L / (k pi)) exp(-lambda_k T) <y0, e_k>``.  The minimal-norm
solution lives in the span of the exponentials themselves, ``u = sum_k
alpha_k exp(-lambda_k (T - t))`` with ``G alpha = d``, where ``G`` is their
Gram matrix on ``(0, T)``.  ``G`` is a Cauchy-like matrix whose condition
number explodes as ``N`` grows or ``eps`` shrinks, so all of the linear
algebra runs in mpmath at a configurable binary precision.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from . import spectral
from .errors import ConditioningError, DomainError, SingularError
from .spectral import PhysicalParams

DEFAULT_PRECISION_BITS = 256
MAX_PRECISION_BITS = 4096
# bits that must survive after the condition number has eaten its share
GUARD_BITS = 32
TIE_TOLERANCE = 1e-12


def default_precision_bits() -> int:
    raw = os.environ.get("VC_PRECISION_BITS")
    if raw is None:
        return DEFAULT_PRECISION_BITS
    bits = int(raw)
    if bits < 64:
        raise DomainError("VC_PRECISION_BITS", f"must be at least 64, got {bits}")
    return bits


@dataclass
class GramMatrix:
    order: int
    entries: mp.matrix
    lambdas: list
    horizon: object
    precision_bits: int
    chol: mp.matrix
    condition_number: object

    def inverse(self) -> mp.matrix:
        with mp.workprec(self.precision_bits):
            return _chol_inverse(self.chol)

    def solve(self, rhs) -> mp.matrix:
        with mp.workprec(self.precision_bits):
            return _chol_solve(self.chol, mp.matrix(rhs))


def _chol_solve(C, b):
    n = C.rows
    y = mp.matrix(n, b.cols)
    for col in range(b.cols):
        for i in range(n):
            s = b[i, col]
            for j in range(i):
                s -= C[i, j] * y[j, col]
            y[i, col] = s / C[i, i]
    x = mp.matrix(n, b.cols)
    for col in range(b.cols):
        for i in reversed(range(n)):
            s = y[i, col]
            for j in range(i + 1, n):
                s -= C[j, i] * x[j, col]
            x[i, col] = s / C[i, i]
    return x


def _chol_inverse(C):
    return _chol_solve(C, mp.eye(C.rows))


def _check_lambdas(lambdas):
    if len(lambdas) < 1:
        raise DomainError("lambdas", "need at least one exponent")
    for k, lam in enumerate(lambdas):
        if not (lam > 0) or not mp.isfinite(lam):
            raise DomainError("lambdas", f"entry {k} must be positive and finite")
    for k in range(1, len(lambdas)):
        lo, hi = lambdas[k - 1], lambdas[k]
        if hi <= lo * (1 + TIE_TOLERANCE):
            if hi < lo:
                raise DomainError("lambdas", "must be increasing")
            raise SingularError(f"lambda_{k} and lambda_{k + 1} coincide to working precision")


def gram_matrix(lambdas, T, precision_bits: int | None = None) -> GramMatrix:
    """``G[j, k] = (1 - exp(-(l_j + l_k) T)) / (l_j + l_k)`` with a Cholesky check."""
    bits = precision_bits or default_precision_bits()
    with mp.workprec(bits):
        lam = [mp.mpf(v) for v in lambdas]
        _check_lambdas(lam)
        T = mp.mpf(T)
        n = len(lam)
        G = mp.matrix(n, n)
        for j in range(n):
            for k in range(j, n):
                s = lam[j] + lam[k]
                G[j, k] = G[k, j] = -mp.expm1(-s * T) / s
        try:
            C = mp.cholesky(G)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConditioningError(f"Cholesky failed at {bits} bits") from exc
        ev = mp.eigsy(G, eigvals_only=True)
        lo, hi = min(ev), max(ev)
        if lo <= 0:
            raise ConditioningError(f"Gram matrix not positive definite at {bits} bits")
        cond = hi / lo
        if mp.log(cond, 2) > bits - GUARD_BITS:
            raise ConditioningError(
                f"condition number 2^{float(mp.log(cond, 2)):.0f} leaves too few of {bits} bits"
            )
        return GramMatrix(n, G, lam, T, bits, C, cond)


def with_precision_policy(fn, start_bits: int | None = None, max_bits: int = MAX_PRECISION_BITS):
    """Call ``fn(bits)``, doubling ``bits`` on ConditioningError up to ``max_bits``."""
    bits = start_bits or default_precision_bits()
    while True:
        try:
            return fn(bits)
        except ConditioningError:
            if bits >= max_bits:
                raise
            bits = min(2 * bits, max_bits)


@dataclass
class MomentProblem:
    params: PhysicalParams
    order: int
    lambdas: list
    targets: list
    precision_bits: int


@dataclass
class ControlFunction:
    """``u(t) = sum_k alphas[k] exp(-lambdas[k] (T - t))`` on ``(0, T)``."""

    lambdas: list
    horizon: object
    alphas: list
    precision_bits: int
    gram: GramMatrix | None = None

    def value_mp(self, t):
        with mp.workprec(self.precision_bits):
            t = mp.mpf(t)
            return mp.fsum(a * mp.exp(-lam * (self.horizon - t)) for a, lam in zip(self.alphas, self.lambdas))

    def __call__(self, t):
        """Float samples; the sum is formed in high precision because the
        coefficients alternate and nearly cancel."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([float(self.value_mp(s)) for s in ts])
        return out if np.ndim(t) else float(out[0])

    def norm(self) -> float:
        with mp.workprec(self.precision_bits):
            g = self.gram or gram_matrix(self.lambdas, self.horizon, self.precision_bits)
            a = mp.matrix(self.alphas)
            val = (a.T * g.entries * a)[0]
            return float(mp.sqrt(max(val, 0)))

    def moments(self) -> list:
        """``int_0^T u(t) exp(-lambda_k (T - t)) dt`` for each k."""
        with mp.workprec(self.precision_bits):
            g = self.gram or gram_matrix(self.lambdas, self.horizon, self.precision_bits)
            m = g.entries * mp.matrix(self.alphas)
            return [m[i] for i in range(m.rows)]


def _sine_moments(params, coeffs, n, bits):
    """mu_k = int_0^L y0 e_k dx for ``y0 = sum_j coeffs[j] sin(j pi x / L)``."""
    with mp.workprec(bits):
        size = max(len(coeffs), n)
        b = spectral.real_cbrt(mp.mpf(params.mach)) / (2 * mp.cbrt(mp.mpf(params.epsilon)))
        E = spectral.tilted_sine_matrix_mp(b, size, mp.mpf(params.length))
        c = [mp.mpf(v) for v in coeffs]
        return [mp.fsum(c[j] * E[j, k] for j in range(len(c))) for k in range(n)]


def moment_scale(params: PhysicalParams, n: int, precision_bits: int) -> list:
    """Factors ``s_k`` with ``d_k = s_k mu_k``."""
    with mp.workprec(precision_bits):
        lam = spectral.eigenvalues_mp(params, n)
        L, T = mp.mpf(params.length), mp.mpf(params.horizon)
        return [L / ((k + 1) * mp.pi) * mp.exp(-lam[k] * T) for k in range(n)]


def target_moments(params: PhysicalParams, y0_sine_coeffs, n: int, pad: bool = False,
                   precision_bits: int | None = None) -> list:
    """Moment vector ``d`` whose matching makes ``y(T)`` vanish on modes 1..n."""
    bits = precision_bits or default_precision_bits()
    coeffs = list(y0_sine_coeffs)
    if len(coeffs) < n and not pad:
        raise DomainError(
            "y0_sine_coeffs", f"{len(coeffs)} coefficients for {n} modes; pass pad=True to zero-fill"
        )
    with mp.workprec(bits):
        mu = _sine_moments(params, coeffs, n, bits)
        scale = moment_scale(params, n, bits)
        return [s * m for s, m in zip(scale, mu)]


def make_problem(params: PhysicalParams, y0_sine_coeffs, n: int, pad: bool = False,
                 precision_bits: int | None = None) -> MomentProblem:
    bits = precision_bits or default_precision_bits()
    if bits < 64:
        raise DomainError("precision_bits", "must be at least 64")
    with mp.workprec(bits):
        d = target_moments(params, y0_sine_coeffs, n, pad=pad, precision_bits=bits)
        return MomentProblem(params, n, spectral.eigenvalues_mp(params, n), d, bits)


def solve_min_norm_control(problem: MomentProblem) -> ControlFunction:
    bits = problem.precision_bits
    with mp.workprec(bits):
        g = gram_matrix(problem.lambdas, problem.params.horizon, bits)
        d = mp.matrix([mp.mpf(v) for v in problem.targets])
        alpha = g.solve(d)
        resid = mp.norm(g.entries * alpha - d)
        dnorm = mp.norm(d)
        if dnorm > 0 and resid > dnorm * mp.mpf(10) ** (-bits / 4):
            raise ConditioningError(f"moment residual {mp.nstr(resid / dnorm, 5)} too large at {bits} bits")
        return ControlFunction(list(g.lambdas), g.horizon, [alpha[i] for i in range(alpha.rows)], bits, g)


def biorthogonal_coefficients(gram: GramMatrix, k: int) -> list:
    """Coefficients of psi_k in the exponential basis (row k of G^{-1})."""
    if not 1 <= k <= gram.order:
        raise DomainError("k", f"must lie in 1..{gram.order}")
    with mp.workprec(gram.precision_bits):
        e = mp.matrix(gram.order, 1)
        e[k - 1] = 1
        col = gram.solve(e)
        return [col[i] for i in range(gram.order)]


def biorthogonal_norm(gram: GramMatrix, k: int) -> float:
    """``||psi_k|| = sqrt((G^{-1})_{kk})`` for the N-term biorthogonal family."""
    coef = biorthogonal_coefficients(gram, k)
    with mp.workprec(gram.precision_bits):
        return mp.sqrt(coef[k - 1])


@dataclass
class CostReport:
    value: float
    log_value: float
    condition_number: float
    precision_bits: int
    order: int


def _cost_at(params, n, bits, sine_modes):
    with mp.workprec(bits):
        g = gram_matrix(spectral.eigenvalues_mp(params, n), params.horizon, bits)
        scale = moment_scale(params, n, bits)
        D = mp.diag(scale)
        Q = D * g.solve(D)
        L = mp.mpf(params.length)
        if sine_modes is None:
            # sup over all of L^2: the data space seen by the moments is span{e_k}
            b2 = spectral.real_cbrt(mp.mpf(params.mach)) / mp.cbrt(mp.mpf(params.epsilon))
            H = spectral.tilted_sine_matrix_mp(b2, n, L)
            R = mp.cholesky(H)
            W = R.T * Q * R
        else:
            if sine_modes < 1:
                raise DomainError("sine_modes", "must be positive")
            b = spectral.real_cbrt(mp.mpf(params.mach)) / (2 * mp.cbrt(mp.mpf(params.epsilon)))
            size = max(sine_modes, n)
            Efull = spectral.tilted_sine_matrix_mp(b, size, L)
            E = mp.matrix(sine_modes, n)
            for j in range(sine_modes):
                for k in range(n):
                    E[j, k] = Efull[j, k]
            W = (2 / L) * E * Q * E.T
        W = (W + W.T) / 2
        ev = mp.eigsy(W, eigvals_only=True)
        top = max(ev)
        if top < 0:
            top = mp.mpf(0)
        return CostReport(float(mp.sqrt(top)), float(mp.log(top) / 2) if top > 0 else -math.inf,
                          float(g.condition_number), bits, n)


def cost_report(params: PhysicalParams, n: int, precision_bits: int | None = None,
                sine_modes: int | None = None) -> CostReport:
    """Finite-section cost ``K_N`` with its diagnostics.

    ``K_N`` is the operator norm of ``y0 -> u``, the minimal ``L^2(0, T)``
    control matching the first ``N`` moments, over unit ``y0``.  With
    ``sine_modes=None`` the supremum runs over all of ``L^2(0, L)``, which
    is exactly the dual observability constant restricted to
    ``span{e_1..e_N}``; with ``sine_modes=J`` the data are restricted to the
    first ``J`` plain sines.  Either way ``K_N <= K`` and ``K_N`` is
    nondecreasing in ``N``.
    """
    if n < 1:
        raise DomainError("n", "need at least one mode")
    return with_precision_policy(lambda bits: _cost_at(params, n, bits, sine_modes), precision_bits)


def cost_estimate(params: PhysicalParams, n: int, precision_bits: int | None = None,
                  sine_modes: int | None = None) -> float:
    return cost_report(params, n, precision_bits, sine_modes).value


def log_cost_estimate(params: PhysicalParams, n: int, precision_bits: int | None = None,
                      sine_modes: int | None = None) -> float:
    """``log K_N``; K_N underflows double precision once ``lambda_1 T`` exceeds ~700."""
    return cost_report(params, n, precision_bits, sine_modes).log_value


# -- scaling relations ---------------------------------------------------------

# Exponents as customarily quoted for the two rescalings of (eps, T, L, M).
QUOTED_FIRST_EXPONENT = 3 / 8
QUOTED_SECOND_EXPONENT = 1 / 8
# Exponents obtained by rescaling the PDE with ``By(t, 0) = u`` and tracking
# the control through the boundary operator.
RESCALED_FIRST_EXPONENT = -1 / 8
RESCALED_SECOND_EXPONENT = -3 / 8


def first_scaling_check(params: PhysicalParams, a: float, n: int,
                        exponent: float = QUOTED_FIRST_EXPONENT,
                        precision_bits: int | None = None) -> float:
    """Relative error of ``K(eps, aT, a^(1/4) L, M a^(-3/4)) = a^exponent K(eps, T, L, M)``."""
    if not a > 0:
        raise DomainError("a", "must be positive")
    scaled = params.replace(horizon=a * params.horizon, length=a**0.25 * params.length,
                            mach=params.mach * a**-0.75)
    lhs = log_cost_estimate(scaled, n, precision_bits)
    rhs = exponent * math.log(a) + log_cost_estimate(params, n, precision_bits)
    return abs(math.expm1(lhs - rhs))


def second_scaling_check(params: PhysicalParams, a: float, n: int,
                         exponent: float = QUOTED_SECOND_EXPONENT,
                         precision_bits: int | None = None) -> float:
    """Relative error of ``a^exponent K(a eps, T, a^(1/4) L, a^(1/4) M) = K(eps, T, L, M)``."""
    if not a > 0:
        raise DomainError("a", "must be positive")
    scaled = params.replace(epsilon=a * params.epsilon, length=a**0.25 * params.length,
                            mach=params.mach * a**0.25)
    lhs = exponent * math.log(a) + log_cost_estimate(scaled, n, precision_bits)
    rhs = log_cost_estimate(params, n, precision_bits)
    return abs(math.expm1(lhs - rhs))
