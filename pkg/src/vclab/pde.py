"""Method-of-lines solvers for the forward control system and its adjoint.

Forward:  y_t + eps y_xxxx + delta y_xxx + M y_x = 0,
          y = 0 at both ends, eps y_xx + (delta/2) y_x = u(t) at x=0 and 0 at x=L.
Adjoint:  phi_t + eps phi_xxxx - delta phi_xxx - M phi_x = g,
          phi = 0 and eps phi_xx - (delta/2) phi_x = 0 at both ends.

Second-order centred stencils on a uniform grid; the flux condition at each end
is discretised with the centred second difference and first difference at the
boundary node, which introduces one ghost value per end that is eliminated into
the first/last interior row.  The resulting pentadiagonal system is factored
once and reused at every implicit step.

Sign convention: integrating the forward equation against an adjoint solution
gives

    int y(T) phi_0 = int y0 phi(0) - int_0^T u(t) phi_x(t, 0) dt,

which is what :func:`duality_residual` checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from . import moments, spectral
from .errors import DomainError, LinearSolveError
from .spectral import PhysicalParams

DEFAULT_GRID = 256
DEFAULT_STEPS = 2048


@dataclass(frozen=True)
class Grid:
    length: float
    n_interior: int

    def __post_init__(self):
        if self.n_interior < 8:
            raise DomainError("n_interior", "need at least 8 interior nodes")
        if not self.length > 0:
            raise DomainError("length", "must be positive")

    @property
    def h(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        """All nodes including both boundary points."""
        return np.linspace(0.0, self.length, self.n_interior + 2)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def refined(self) -> "Grid":
        return Grid(self.length, 2 * self.n_interior + 1)

    def integrate(self, f) -> float:
        """Trapezoid rule over all nodes; ``f`` may be interior or full samples."""
        f = np.asarray(f, dtype=float)
        if f.shape[-1] == self.n_interior:
            return float(self.h * np.sum(f, axis=-1))
        return float(self.h * (np.sum(f[..., 1:-1], axis=-1) + 0.5 * (f[..., 0] + f[..., -1])))

    def norm(self, f) -> float:
        return math.sqrt(max(self.integrate(np.asarray(f) ** 2), 0.0))


@dataclass
class Trajectory:
    grid: Grid
    dt: float
    times: np.ndarray
    states: np.ndarray  # (steps + 1, n_interior + 2), boundary columns exactly zero
    trace: np.ndarray  # d/dx at x = 0 per stored time

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _operator(params: PhysicalParams, grid: Grid, adjoint: bool):
    """Interior matrix ``A`` and left-boundary input vector ``b`` such that the
    semi-discrete system reads ``y' = -(A y + b u)``."""
    n, h = grid.n_interior, grid.h
    eps, delta, M = params.epsilon, params.delta, params.mach
    if adjoint:
        c3, c1, sigma = -delta, -M, -delta / 2
    else:
        c3, c1, sigma = delta, M, delta / 2
    # stencil weights for offsets -2..2
    w4 = np.array([1.0, -4.0, 6.0, -4.0, 1.0]) * eps / h**4
    w3 = np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) * c3 / (2 * h**3)
    w1 = np.array([0.0, -1.0, 0.0, 1.0, 0.0]) * c1 / (2 * h)
    w = w4 + w3 + w1
    diags = [np.full(n - abs(o), w[o + 2]) for o in range(-2, 3)]
    A = sparse.diags(diags, list(range(-2, 3)), shape=(n, n), format="lil")
    # ghosts: y_{-1} = rho_l y_1 + kappa u,  y_{n+2} = rho_r y_n
    den_l = 2 * eps - sigma * h
    den_r = 2 * eps + sigma * h
    if den_l == 0 or den_r == 0:
        raise LinearSolveError("boundary closure singular for this grid spacing")
    rho_l = -(2 * eps + sigma * h) / den_l
    kappa = 2 * h * h / den_l
    rho_r = -(2 * eps - sigma * h) / den_r
    A[0, 0] += w[0] * rho_l
    A[n - 1, n - 1] += w[4] * rho_r
    b = np.zeros(n)
    b[0] = w[0] * kappa
    return A.tocsc(), b


def _step(params, grid, dt, y0_int, forcing, steps, adjoint, theta):
    if dt <= 0:
        raise DomainError("dt", "must be positive")
    if not 0.5 <= theta <= 1.0:
        raise DomainError("theta", "must lie in [1/2, 1]")
    A, b = _operator(params, grid, adjoint)
    n = grid.n_interior
    I = sparse.identity(n, format="csc")
    try:
        lu = sla.splu((I + theta * dt * A).tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(str(exc)) from exc
    B = (I - (1 - theta) * dt * A).tocsr()
    states = np.zeros((steps + 1, n + 2))
    y = np.array(y0_int, dtype=float)
    states[0, 1:-1] = y
    for m in range(steps):
        rhs = B @ y + dt * forcing(m, b)
        y = lu.solve(rhs)
        if not np.all(np.isfinite(y)):
            raise LinearSolveError(f"non-finite state at step {m + 1}")
        states[m + 1, 1:-1] = y
    times = dt * np.arange(steps + 1)
    return Trajectory(grid, dt, times, states, _trace(states, grid.h))


def _trace(states, h):
    s = states
    return (-25 * s[:, 0] + 48 * s[:, 1] - 36 * s[:, 2] + 16 * s[:, 3] - 3 * s[:, 4]) / (12 * h)


def _interior(samples, grid):
    y = np.asarray(samples, dtype=float)
    if y.shape == (grid.n_interior + 2,):
        return y[1:-1]
    if y.shape == (grid.n_interior,):
        return y
    raise DomainError("samples", f"expected {grid.n_interior} or {grid.n_interior + 2} values, got {y.shape}")


def solve_forward(params: PhysicalParams, y0_samples, u_series, grid: Grid, dt: float,
                  theta: float = 1.0) -> Trajectory:
    """Implicit theta-scheme (backward Euler by default) for the control system.

    ``u_series`` holds the boundary input at the step times ``m dt``,
    ``m = 0..steps``; its length fixes the number of steps.
    """
    u = np.asarray(u_series, dtype=float)
    if u.ndim != 1 or u.size < 2:
        raise DomainError("u_series", "need at least two samples")
    steps = u.size - 1

    def forcing(m, b):
        return -b * (theta * u[m + 1] + (1 - theta) * u[m])

    return _step(params, grid, dt, _interior(y0_samples, grid), forcing, steps, False, theta)


def solve_adjoint(params: PhysicalParams, phi0_samples, g_samples, grid: Grid, dt: float,
                  steps: int | None = None, theta: float = 1.0) -> Trajectory:
    """Forward-in-time adjoint system with source ``g``.

    ``g_samples`` is ``None`` (no source) or an array of shape
    ``(steps + 1, n_interior)`` holding g at the step times.
    """
    if g_samples is None:
        if steps is None:
            raise DomainError("steps", "required when g_samples is None")
        g = None
    else:
        g = np.asarray(g_samples, dtype=float)
        if g.shape[1] == grid.n_interior + 2:
            g = g[:, 1:-1]
        steps = g.shape[0] - 1

    def forcing(m, b):
        if g is None:
            return 0.0
        return theta * g[m + 1] + (1 - theta) * g[m]

    return _step(params, grid, dt, _interior(phi0_samples, grid), forcing, steps, True, theta)


def boundary_trace(traj: Trajectory) -> np.ndarray:
    """One-sided fourth-order estimate of the x-derivative at x = 0 per stored time."""
    return _trace(traj.states, traj.grid.h)


def reflect(traj: Trajectory) -> Trajectory:
    """Time reflection ``t -> T - t``: turns an adjoint run of the forward-in-time
    system into the backward adjoint with terminal data ``phi(T) = phi_0``."""
    return Trajectory(traj.grid, traj.dt, traj.times, traj.states[::-1].copy(), traj.trace[::-1].copy())


# -- duality, energy, observability ---------------------------------------------


def _trapezoid_time(values, dt):
    v = np.asarray(values, dtype=float)
    return float(dt * (np.sum(v) - 0.5 * (v[0] + v[-1])))


@dataclass
class DualityTerms:
    lhs: float
    initial: float
    boundary: float

    @property
    def residual(self) -> float:
        rhs = self.initial + self.boundary
        scale = max(abs(self.lhs), abs(rhs))
        return abs(self.lhs - rhs) / scale if scale > 0 else 0.0


def duality_terms(params, y0, u_series, phi0, grid, dt, theta=1.0) -> DualityTerms:
    u = np.asarray(u_series, dtype=float)
    steps = u.size - 1
    y = solve_forward(params, y0, u, grid, dt, theta)
    phi = reflect(solve_adjoint(params, phi0, None, grid, dt, steps=steps, theta=theta))
    lhs = grid.integrate(y.final * _full(phi0, grid))
    initial = grid.integrate(_full(y0, grid) * phi.states[0])
    boundary = -_trapezoid_time(u * phi.trace, dt)
    return DualityTerms(lhs, initial, boundary)


def duality_residual(params, y0, u_series, phi0, grid, dt, theta=1.0) -> float:
    """Relative mismatch in the transposition identity at ``t = T``."""
    return duality_terms(params, y0, u_series, phi0, grid, dt, theta).residual


def _full(samples, grid):
    y = np.asarray(samples, dtype=float)
    if y.shape == (grid.n_interior,):
        return np.concatenate([[0.0], y, [0.0]])
    return y


def energy_residual(params: PhysicalParams, traj: Trajectory, g_samples=None) -> float:
    """max over steps of ``|d/dt (1/2)||phi||^2 + eps ||phi_xx||^2 - int g phi|``,
    relative to the initial energy, for an adjoint trajectory."""
    grid, dt = traj.grid, traj.dt
    h = grid.h
    s = traj.states
    half_energy = 0.5 * np.array([grid.integrate(row**2) for row in s])
    rate = np.diff(half_energy) / dt
    # phi_xx at interior nodes, boundary nodes via the ghost closure
    sigma = -params.delta / 2
    eps = params.epsilon
    pxx = np.zeros_like(s)
    pxx[:, 1:-1] = (s[:, 2:] - 2 * s[:, 1:-1] + s[:, :-2]) / h**2
    # eps phi_xx = sigma phi_x at each end (homogeneous flux condition)
    pxx[:, 0] = sigma / eps * traj.trace
    right = (25 * s[:, -1] - 48 * s[:, -2] + 36 * s[:, -3] - 16 * s[:, -4] + 3 * s[:, -5]) / (12 * h)
    pxx[:, -1] = sigma / eps * right
    diss = eps * np.array([grid.integrate(row**2) for row in pxx])
    if g_samples is None:
        work = np.zeros(len(s))
    else:
        g = np.asarray(g_samples, dtype=float)
        if g.shape[1] == grid.n_interior:
            g = np.pad(g, ((0, 0), (1, 1)))
        work = np.array([grid.integrate(gr * sr) for gr, sr in zip(g, s)])
    mid = 0.5 * (diss[1:] + diss[:-1]) - 0.5 * (work[1:] + work[:-1])
    scale = max(half_energy[0], 1e-300)
    return float(np.max(np.abs(rate + mid)) / scale)


def observability_ratio(params: PhysicalParams, phi0_coeffs, precision_bits: int = 256) -> float:
    """``||phi(0)|| / ||phi_x(., 0)||_{L^2(0,T)}`` for the backward adjoint with
    ``phi(T) = sum_k c_k e_k``, from the exact modal solution."""
    c = list(phi0_coeffs)
    n = len(c)
    with mp.workprec(precision_bits):
        lam = spectral.eigenvalues_mp(params, n)
        T, L = mp.mpf(params.horizon), mp.mpf(params.length)
        b2 = spectral.real_cbrt(mp.mpf(params.mach)) / mp.cbrt(mp.mpf(params.epsilon))
        H = spectral.tilted_sine_matrix_mp(b2, n, L)
        w = mp.matrix([mp.mpf(ck) * mp.exp(-lk * T) for ck, lk in zip(c, lam)])
        v = mp.matrix([mp.mpf(ck) * (k + 1) * mp.pi / L for k, ck in enumerate(c)])
        G = moments.gram_matrix(lam, T, precision_bits).entries
        top = (w.T * H * w)[0]
        bottom = (v.T * G * v)[0]
        if bottom == 0:
            return 0.0 if top == 0 else math.inf
        return float(mp.sqrt(top / bottom))


def observability_ratio_grid(params: PhysicalParams, phi0_samples, grid: Grid, dt: float,
                             steps: int, theta: float = 1.0) -> float:
    """Same ratio from a simulated adjoint run instead of the modal formula."""
    traj = reflect(solve_adjoint(params, phi0_samples, None, grid, dt, steps=steps, theta=theta))
    top = grid.norm(traj.states[0])
    bottom = math.sqrt(_trapezoid_time(traj.trace**2, dt))
    return top / bottom if bottom > 0 else math.inf


# -- initial data and the closed loop ---------------------------------------------


@dataclass(frozen=True)
class InitialDatum:
    """Initial state given either by plain sine coefficients or as a
    forward eigenmode ``exp(+b x) sin(k pi x / L)``."""

    sine_coeffs: tuple = ()
    mode: int | None = None

    @classmethod
    def sines(cls, coeffs):
        return cls(sine_coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def conjugate_mode(cls, k: int):
        return cls(mode=int(k))

    @property
    def is_zero(self) -> bool:
        return self.mode is None and not any(self.sine_coeffs)

    def samples(self, params: PhysicalParams, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode is not None:
            return spectral.conjugate_mode_eval(params, self.mode, x)
        out = np.zeros_like(x)
        for j, c in enumerate(self.sine_coeffs, start=1):
            out += c * np.sin(j * np.pi * x / params.length)
        out[(x == 0) | (x == params.length)] = 0.0
        return out

    def targets(self, params: PhysicalParams, n: int, precision_bits: int) -> list:
        if self.mode is not None:
            with mp.workprec(precision_bits):
                scale = moments.moment_scale(params, n, precision_bits)
                half = mp.mpf(params.length) / 2
                return [scale[k] * half if k + 1 == self.mode else mp.mpf(0) for k in range(n)]
        return moments.target_moments(params, self.sine_coeffs, n, pad=True, precision_bits=precision_bits)


@dataclass
class ControlRun:
    ratio: float
    trajectory: Trajectory
    control: moments.ControlFunction | None
    u_samples: np.ndarray
    initial_norm: float
    final_norm: float


def end_to_end_null_control(params: PhysicalParams, datum: InitialDatum, n: int,
                            grid: Grid | None = None, dt: float | None = None,
                            precision_bits: int | None = None, theta: float = 1.0) -> ControlRun:
    """Synthesise the minimal-norm N-mode control and feed it to the forward solver."""
    grid = grid or Grid(params.length, DEFAULT_GRID)
    dt = dt or params.horizon / DEFAULT_STEPS
    steps = int(round(params.horizon / dt))
    times = dt * np.arange(steps + 1)
    y0 = datum.samples(params, grid.nodes)
    if datum.is_zero:
        u = np.zeros(steps + 1)
        traj = solve_forward(params, y0, u, grid, dt, theta)
        return ControlRun(0.0, traj, None, u, 0.0, 0.0)

    def build(bits):
        with mp.workprec(bits):
            d = datum.targets(params, n, bits)
            problem = moments.MomentProblem(params, n, spectral.eigenvalues_mp(params, n), d, bits)
            return moments.solve_min_norm_control(problem)

    control = moments.with_precision_policy(build, precision_bits)
    u = control(times)
    traj = solve_forward(params, y0, u, grid, dt, theta)
    y0_norm = grid.norm(y0)
    yT_norm = grid.norm(traj.final)
    return ControlRun(yT_norm / y0_norm, traj, control, u, y0_norm, yT_norm)


def transport_error(params: PhysicalParams, y0_func, t: float, grid: Grid, dt: float) -> float:
    """Max deviation of the uncontrolled solution from the pure transport profile
    ``y0(x - t M)`` over ``{t M < x < L}`` (``M > 0``)."""
    if params.mach <= 0:
        raise DomainError("mach", "transport comparison implemented for M > 0")
    steps = int(round(t / dt))
    x = grid.nodes
    traj = solve_forward(params, y0_func(x), np.zeros(steps + 1), grid, dt)
    t_end = steps * dt
    mask = x > t_end * params.mach
    shifted = y0_func(np.clip(x - t_end * params.mach, 0.0, params.length))
    return float(np.max(np.abs(traj.final[mask] - shifted[mask])))
