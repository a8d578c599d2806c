import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from vclab import moments, pde, spectral
from vclab.errors import ConditioningError, DomainError, SingularError

BASE = spectral.make_params(0.1, 1.0, 1.0, 6.0)


def quad_exp_product(lj, lk, T):
    return mp.quad(lambda t: mp.exp(-(lj + lk) * (T - t)), [0, T])


def test_gram_entries_against_quadrature():
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    with mp.workprec(256):
        lam = spectral.eigenvalues_mp(p, 5)
        g = moments.gram_matrix(lam, p.horizon, 256)
        T = mp.mpf(p.horizon)
        for j in range(5):
            for k in range(5):
                ref = quad_exp_product(lam[j], lam[k], T)
                assert abs(g.entries[j, k] - ref) < mp.mpf(10) ** -25 * abs(ref)


def _cond(eps, n):
    return moments.gram_matrix(spectral.eigenvalues_mp(BASE.replace(epsilon=eps), n), 6.0, 256).condition_number


def test_gram_condition_grows_with_modes_and_small_epsilon():
    assert _cond(0.1, 4) < _cond(0.1, 8) < _cond(0.1, 12)
    # in the small-viscosity range the spectrum clusters and conditioning degrades
    assert _cond(1e-4, 8) < _cond(1e-5, 8) < _cond(1e-6, 8)


def test_gram_rejects_tied_exponents():
    with mp.workprec(128):
        with pytest.raises(SingularError):
            moments.gram_matrix([mp.mpf(1), mp.mpf(1), mp.mpf(3)], 1.0, 128)


def test_low_precision_raises_and_policy_escalates():
    p = spectral.make_params(1e-5, 1.0, 1.0, 6.0)
    with pytest.raises(ConditioningError):
        moments.gram_matrix(spectral.eigenvalues_mp(p, 12), 6.0, 64)
    assert moments.cost_report(p, 12, precision_bits=64).precision_bits > 64
    seen = []

    def attempt(bits):
        seen.append(bits)
        if bits < 512:
            raise ConditioningError("too few bits")
        return bits

    assert moments.with_precision_policy(attempt, 128) == 512
    assert seen == [128, 256, 512]
    with pytest.raises(ConditioningError):
        moments.with_precision_policy(lambda b: (_ for _ in ()).throw(ConditioningError("no")), 2048, 4096)


def test_precision_env_override(monkeypatch):
    monkeypatch.setenv("VC_PRECISION_BITS", "384")
    assert moments.default_precision_bits() == 384
    monkeypatch.setenv("VC_PRECISION_BITS", "16")
    with pytest.raises(DomainError):
        moments.default_precision_bits()
    monkeypatch.delenv("VC_PRECISION_BITS")
    assert moments.default_precision_bits() == moments.DEFAULT_PRECISION_BITS


@pytest.mark.parametrize("n", [1, 4, 8])
def test_biorthogonality_by_quadrature(n):
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    with mp.workprec(256):
        lam = spectral.eigenvalues_mp(p, n)
        g = moments.gram_matrix(lam, p.horizon, 256)
        T = mp.mpf(p.horizon)
        worst = mp.mpf(0)
        for k in range(1, n + 1):
            coef = moments.biorthogonal_coefficients(g, k)
            for j in range(n):
                val = mp.quad(lambda t: mp.fsum(c * mp.exp(-(lm + lam[j]) * (T - t)) for c, lm in zip(coef, lam)), [0, T])
                worst = max(worst, abs(val - (1 if j == k - 1 else 0)))
        assert worst < mp.mpf(10) ** -20


def test_biorthogonal_norm_is_diagonal_of_inverse():
    with mp.workprec(256):
        lam = spectral.eigenvalues_mp(BASE, 6)
        g = moments.gram_matrix(lam, 6.0, 256)
        inv = g.inverse()
        for k in range(1, 7):
            assert abs(moments.biorthogonal_norm(g, k) ** 2 - inv[k - 1, k - 1]) < mp.mpf(10) ** -40 * inv[k - 1, k - 1]
        with pytest.raises(DomainError):
            moments.biorthogonal_coefficients(g, 7)


def test_min_norm_control_matches_moments():
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    prob = moments.make_problem(p, [1.0, -0.5, 0.25], 5, pad=True)
    u = moments.solve_min_norm_control(prob)
    with mp.workprec(prob.precision_bits):
        got = u.moments()
        for g, d in zip(got, prob.targets):
            assert abs(g - d) <= mp.mpf(10) ** -60 * max(abs(v) for v in prob.targets)
        # the norm is sqrt(d^T G^{-1} d)
        d = mp.matrix(prob.targets)
        ref = mp.sqrt((d.T * u.gram.solve(d))[0])
    assert u.norm() == pytest.approx(float(ref), rel=1e-12)


def test_min_norm_control_samples_match_quadrature_moments():
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    prob = moments.make_problem(p, [1.0], 3, pad=True)
    u = moments.solve_min_norm_control(prob)
    lam = spectral.eigenvalues(p, 3)
    t = np.linspace(0, 0.5, 64001)
    ut = u(t)
    for k in range(3):
        m = integrate.simpson(ut * np.exp(-lam[k] * (0.5 - t)), x=t)
        assert m == pytest.approx(float(prob.targets[k]), rel=1e-9, abs=1e-10 * float(prob.targets[0]))


def test_target_moments_needs_padding():
    with pytest.raises(DomainError):
        moments.target_moments(BASE, [1.0], 3)


def test_target_moment_sign_and_scale():
    # y0 = sin(pi x): mu_1 = int sin(pi x) e_1 dx > 0 and d_1 carries the factor L/pi e^{-lambda_1 T}
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    with mp.workprec(128):
        d = moments.target_moments(p, [1.0], 1, precision_bits=128)[0]
    mu = spectral.tilted_sine_integral(p.weight_rate, 1, 1, 1.0)
    assert float(d) == pytest.approx(mu / math.pi * math.exp(-spectral.eigenvalue(p, 1) * 0.5), rel=1e-13)


@pytest.mark.parametrize("mach", [1.0, -1.0])
def test_single_mode_cost_closed_form(mach):
    p = spectral.make_params(0.1, mach, 1.0, 6.0)
    lam = spectral.eigenvalue(p, 1)
    g11 = -math.expm1(-2 * lam * 6.0) / (2 * lam)
    scale = 1 / math.pi * math.exp(-lam * 6.0)
    # sup over L^2: |mu_1| <= ||e_1||
    ref = scale * spectral.eigenfunction_l2_norm(p, 1) / math.sqrt(g11)
    assert moments.cost_estimate(p, 1) == pytest.approx(ref, rel=1e-12)
    # sup over unit multiples of sqrt(2/L) sin(pi x / L)
    ref_sine = scale * math.sqrt(2.0) * spectral.tilted_sine_integral(p.weight_rate, 1, 1, 1.0) / math.sqrt(g11)
    assert moments.cost_estimate(p, 1, sine_modes=1) == pytest.approx(ref_sine, rel=1e-12)


def test_cost_nondecreasing_in_modes():
    logs = [moments.log_cost_estimate(BASE, n) for n in range(1, 13)]
    assert all(b >= a - 1e-12 for a, b in zip(logs, logs[1:]))


def test_sine_restricted_cost_below_full_cost():
    for n in (2, 5):
        assert moments.log_cost_estimate(BASE, n, sine_modes=n) <= moments.log_cost_estimate(BASE, n) + 1e-12


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda c: max(map(abs, c)) > 1e-3))
def test_observability_ratio_bounded_by_cost(coeffs):
    # K_N is the sup of ||phi(0)|| / ||phi_x(., 0)|| over span{e_1..e_N}
    p = spectral.make_params(0.1, 1.0, 1.0, 0.5)
    ratio = pde.observability_ratio(p, coeffs)
    assert ratio <= moments.cost_estimate(p, 4) * (1 + 1e-10)


def test_scaling_check_trivial_factor():
    assert moments.first_scaling_check(BASE, 1.0, 4) == pytest.approx(0.0, abs=1e-14)
    assert moments.second_scaling_check(BASE, 1.0, 4) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        moments.first_scaling_check(BASE, -1.0, 4)


@pytest.mark.parametrize("a", [16.0, 1 / 16])
def test_rescaled_exponents_are_exact(a):
    p = spectral.make_params(0.05, 1.0, 1.0, 6.0)
    assert moments.first_scaling_check(p, a, 8, moments.RESCALED_FIRST_EXPONENT) < 1e-10
    assert moments.second_scaling_check(p, a, 8, moments.RESCALED_SECOND_EXPONENT) < 1e-10


@pytest.mark.parametrize("a", [16.0, 1 / 16])
def test_quoted_exponents_miss_by_a_power(a):
    # the mismatch is exactly a^{+-1/2}: the quoted exponents are off by 1/2
    p = spectral.make_params(0.05, 1.0, 1.0, 6.0)
    first = moments.first_scaling_check(p, a, 8)
    second = moments.second_scaling_check(p, a, 8)
    assert first == pytest.approx(abs(a**-0.5 - 1), rel=1e-9)
    assert second == pytest.approx(abs(a**0.5 - 1), rel=1e-9)


def test_small_epsilon_large_time_cost_decreases():
    # for T = 6 the decay of log K in eps^{-1/3} sets in once eps is small enough
    # that lambda_1 grows again as eps shrinks
    eps = (1e-3, 3e-4, 1e-4, 3e-5, 1e-5)
    logs = [moments.log_cost_estimate(BASE.replace(epsilon=e), 8) for e in eps]
    assert all(b < a for a, b in zip(logs, logs[1:]))
