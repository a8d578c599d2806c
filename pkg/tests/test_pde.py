import math

import numpy as np
import pytest

from vclab import moments, multiplier, pde, spectral
from vclab.errors import DomainError

P = spectral.make_params(0.1, 1.0, 1.0, 0.5)


def test_grid_basics():
    g = pde.Grid(2.0, 15)
    assert g.h == pytest.approx(2.0 / 16)
    assert g.nodes[0] == 0 and g.nodes[-1] == 2.0
    assert g.refined().h == pytest.approx(g.h / 2)
    assert g.integrate(np.ones(17)) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        pde.Grid(1.0, 4)


def _mode_decay_error(params, n, adjoint, k=1, steps=400, theta=0.5):
    grid = pde.Grid(params.length, n)
    T = params.horizon
    dt = T / steps
    lam = spectral.eigenvalue(params, k)
    if adjoint:
        f0 = spectral.eigenfunction_eval(params, k, grid.nodes)
        traj = pde.solve_adjoint(params, f0, None, grid, dt, steps=steps, theta=theta)
    else:
        f0 = spectral.conjugate_mode_eval(params, k, grid.nodes)
        traj = pde.solve_forward(params, f0, np.zeros(steps + 1), grid, dt, theta)
    exact = f0 * math.exp(-lam * T)
    return np.max(np.abs(traj.final - exact)) / np.max(np.abs(f0))


@pytest.mark.parametrize("adjoint", [False, True])
@pytest.mark.parametrize("mach", [1.0, -1.0])
def test_eigenmode_decay_second_order(adjoint, mach):
    p = P.replace(mach=mach, horizon=0.05)
    errs = [_mode_decay_error(p, n, adjoint) for n in (63, 127, 255)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert errs[-1] < 1e-3
    assert all(o > 1.7 for o in orders)


def test_theta_domain():
    g = pde.Grid(1.0, 31)
    with pytest.raises(DomainError):
        pde.solve_forward(P, np.zeros(33), np.zeros(3), g, 0.1, theta=0.3)
    with pytest.raises(DomainError):
        pde.solve_forward(P, np.zeros(33), np.zeros(1), g, 0.1)
    with pytest.raises(DomainError):
        pde.solve_forward(P, np.zeros(20), np.zeros(3), g, 0.1)


def test_boundary_trace_of_adjoint_mode():
    g = pde.Grid(1.0, 255)
    steps = 4000
    phi0 = spectral.eigenfunction_eval(P, 2, g.nodes)
    traj = pde.solve_adjoint(P, phi0, None, g, P.horizon / steps, steps=steps, theta=0.5)
    exact = spectral.eigenfunction_derivative_at_zero(P, 2) * np.exp(-spectral.eigenvalue(P, 2) * traj.times)
    # measured against the initial trace: late values sit far below round-off
    assert np.max(np.abs(pde.boundary_trace(traj) - exact)) < 2e-4 * exact[0]


def test_reflect_reverses_time():
    g = pde.Grid(1.0, 31)
    traj = pde.solve_adjoint(P, spectral.eigenfunction_eval(P, 1, g.nodes), None, g, 0.01, steps=5)
    r = pde.reflect(traj)
    np.testing.assert_array_equal(r.states[0], traj.states[-1])
    np.testing.assert_array_equal(r.trace[-1], traj.trace[0])


def _duality_residuals(p, phi_coeffs, theta, levels=((256, 2048), (513, 4096))):
    T = p.horizon
    res = []
    for n, steps in levels:
        g = pde.Grid(1.0, n)
        t = np.linspace(0, T, steps + 1)
        u = np.sin(math.pi * t / T) + 0.3 * np.sin(3 * math.pi * t / T)
        y0 = spectral.conjugate_mode_eval(p, 1, g.nodes)
        phi0 = sum(c * spectral.eigenfunction_eval(p, k, g.nodes) for k, c in enumerate(phi_coeffs, 1))
        res.append(pde.duality_residual(p, y0, u, phi0, g, T / steps, theta=theta))
    return res


@pytest.mark.parametrize("T", [6.0, 0.2])
def test_duality_identity_converges_second_order(T):
    res = _duality_residuals(P.replace(horizon=T), (1.0, 0.5), 0.5)
    assert res[1] < res[0] / 3
    assert res[1] < 1e-3


def test_duality_identity_first_order_for_backward_euler():
    res = _duality_residuals(P.replace(horizon=6.0), (1.0,), 1.0)
    assert res[1] / res[0] == pytest.approx(0.5, abs=0.05)


def test_duality_at_default_resolution():
    res = _duality_residuals(P.replace(horizon=6.0), (1.0,), 0.5, levels=((256, 2048),))
    assert res[0] < 1e-3


def test_duality_sign_convention():
    # with y0 = 0 the whole final pairing comes from the boundary term -int u phi_x(t, 0)
    g = pde.Grid(1.0, 255)
    steps = 1000
    t = np.linspace(0, P.horizon, steps + 1)
    phi0 = spectral.eigenfunction_eval(P, 1, g.nodes)
    terms = pde.duality_terms(P, np.zeros(257), np.ones_like(t), phi0, g, P.horizon / steps, theta=0.5)
    assert terms.initial == 0.0
    assert terms.lhs == pytest.approx(terms.boundary, rel=1e-3)
    lam = spectral.eigenvalue(P, 1)
    exact = -math.pi * (-math.expm1(-lam * P.horizon)) / lam
    assert terms.boundary == pytest.approx(exact, rel=1e-3)


def test_energy_identity_converges():
    # data built from adjoint modes satisfy both boundary conditions
    res = []
    for n, steps in ((63, 200), (127, 800), (255, 3200)):
        g = pde.Grid(1.0, n)
        phi0 = sum(c * spectral.eigenfunction_eval(P, k, g.nodes) for k, c in ((1, 1.0), (2, 0.5), (3, 0.2)))
        traj = pde.solve_adjoint(P, phi0, None, g, 0.01 / steps, steps=steps, theta=0.5)
        res.append(pde.energy_residual(P, traj))
    assert res[-1] < 5e-3
    assert res[0] > res[1] > res[2]


def test_observability_ratio_grid_matches_modal():
    g = pde.Grid(1.0, 255)
    steps = 1000
    coeffs = [1.0, -0.4, 0.2]
    phi0 = sum(c * spectral.eigenfunction_eval(P, k + 1, g.nodes) for k, c in enumerate(coeffs))
    grid_ratio = pde.observability_ratio_grid(P, phi0, g, P.horizon / steps, steps, theta=0.5)
    assert grid_ratio == pytest.approx(pde.observability_ratio(P, coeffs), rel=5e-3)


def test_initial_datum_samples():
    x = np.linspace(0, 1, 11)
    d = pde.InitialDatum.sines([1.0, 2.0])
    np.testing.assert_allclose(d.samples(P, x), np.sin(math.pi * x) + 2 * np.sin(2 * math.pi * x), atol=1e-15)
    assert pde.InitialDatum.sines([0.0, 0.0]).is_zero
    assert not pde.InitialDatum.conjugate_mode(1).is_zero
    np.testing.assert_allclose(pde.InitialDatum.conjugate_mode(2).samples(P, x),
                               spectral.conjugate_mode_eval(P, 2, x))


def test_mode_datum_targets_match_sine_route():
    # e^{bx} sin(pi x) expanded in sines and pushed through target_moments
    n, J = 3, 60
    b = P.weight_rate
    coeffs = [2 * spectral.tilted_sine_integral(-b, j, 1, 1.0) for j in range(1, J + 1)]
    via_sines = moments.target_moments(P, coeffs, n, precision_bits=128)
    direct = pde.InitialDatum.conjugate_mode(1).targets(P, n, 128)
    assert float(via_sines[0]) == pytest.approx(float(direct[0]), rel=1e-3)
    assert abs(float(via_sines[1])) < 1e-3 * abs(float(direct[0]))


def test_zero_datum_zero_control():
    run = pde.end_to_end_null_control(P, pde.InitialDatum.sines([0.0]), 4)
    assert run.control is None and not np.any(run.u_samples)
    assert run.final_norm == 0.0


@pytest.mark.parametrize("T", [0.2, 0.5])
def test_control_beats_free_decay(T):
    p = P.replace(horizon=T)
    datum = pde.InitialDatum.conjugate_mode(1)
    run = pde.end_to_end_null_control(p, datum, 6)
    free = math.exp(-spectral.eigenvalue(p, 1) * T)
    assert run.ratio < free / 10
    finer = pde.end_to_end_null_control(p, datum, 6, pde.Grid(1.0, 513), T / 4096)
    assert finer.ratio < run.ratio


def test_control_initial_norm_is_exact():
    run = pde.end_to_end_null_control(P, pde.InitialDatum.conjugate_mode(1), 4)
    assert run.initial_norm == pytest.approx(multiplier.conjugate_mode_norm(P), rel=1e-4)


def test_control_norm_below_cost_bound():
    run = pde.end_to_end_null_control(P, pde.InitialDatum.sines([1.0, 0.5]), 5)
    cost = moments.cost_estimate(P, 5)
    assert run.control.norm() <= cost * run.initial_norm * (1 + 1e-4)


def test_transport_limit():
    # as eps -> 0 the free solution approaches pure transport y0(x - M t)
    bump = lambda x: np.where(np.abs(x - 0.3) < 0.15, np.cos(np.pi * (x - 0.3) / 0.3) ** 4, 0.0)  # noqa: E731
    errs = []
    for eps in (1e-3, 1e-4, 1e-5):
        p = spectral.make_params(eps, 1.0, 1.0, 0.3)
        errs.append(pde.transport_error(p, bump, 0.3, pde.Grid(1.0, 1023), 0.3 / 1200))
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(DomainError):
        pde.transport_error(spectral.make_params(1e-3, -1.0, 1.0, 0.3), bump, 0.3, pde.Grid(1.0, 63), 0.01)
