import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtlab.errors import ConfigError, HypothesisViolationError, InfeasibleRadiusError
from rtlab.grid import PhaseGrid, Stepper, bump_state, dirac_state
from rtlab.harris import (ball_sup, certified_rate, clopper_pearson_lower, doeblin_decay_bound,
                          foster_lyapunov_weights, harris_rate, log_minorisation_bound,
                          lstar_phi, lyapunov_phi, minorisation_bound, minorisation_starts,
                          moment_bound, verify_drift, verify_minorisation,
                          verify_minorisation_particles)
from rtlab.model import custom_profile, make_params, sign_response, smoothed_cone, tanh_response


def cone_with(m_star, grad_sup=1.0):
    base = smoothed_cone(0.0, 1.0, 1)
    return custom_profile(base.value, base.grad, base.hess, d=1, grad_sup=grad_sup, R=1.0,
                          m_star=m_star, tail=base.tail, check=False)


# ---- weights ---------------------------------------------------------------

def test_weights_reference_arithmetic():
    p = make_params(1, 0.5, sign_response(), cone_with(0.5), lambda_tilde=0.25)
    w = foster_lyapunov_weights(p)
    assert w.beta == pytest.approx(1 / 3, abs=1e-15)
    assert w.xi_tail == pytest.approx(2.0)
    assert w.bound1 == pytest.approx(0.25 * 0.5 * 0.5 * 2 / (8 * 1.5), rel=1e-12)
    assert w.bound1 == pytest.approx(0.0104167, abs=1e-7)
    assert w.bound2 == pytest.approx(0.6, rel=1e-12)
    assert w.gamma == pytest.approx(0.0104167, abs=1e-7)


def test_xi_tail_k2_independent_of_m_star():
    for m in (0.3, 0.6):
        p = make_params(1, 0.5, tanh_response(2.0), cone_with(m), lambda_tilde=0.1)
        assert foster_lyapunov_weights(p).xi_tail == 1.0


@settings(max_examples=40, deadline=None)
@given(chi=st.floats(0.05, 0.95), alpha=st.floats(0.3, 3.0))
def test_weight_constraints(chi, alpha):
    p = make_params(1, chi, sign_response(), smoothed_cone(0.0, alpha, 1))
    w = foster_lyapunov_weights(p)
    assert w.beta == pytest.approx(chi / (1 + chi), rel=1e-15)
    assert w.gamma <= p.lambda_tilde * chi * (1 - chi) * w.xi_tail / (8 * (1 + chi)) * (1 + 1e-12)
    assert w.gamma <= (1 + chi) / (2 * (2 + chi) * p.V0 * w.grad_sup) * (1 + 1e-12)
    assert w.gamma * p.V0 * w.grad_sup * (1 + w.beta) <= 0.5 + 1e-12


def test_weights_reject_bad_gamma_and_chi(ref_params):
    with pytest.raises(ConfigError):
        foster_lyapunov_weights(ref_params, gamma=1.0)
    with pytest.raises(HypothesisViolationError):
        foster_lyapunov_weights(ref_params.with_chi(0.0))


# ---- phi -------------------------------------------------------------------

def test_phi_worked_example():
    p = make_params(1, 0.5, sign_response(), cone_with(0.5), lambda_tilde=0.25)
    w = foster_lyapunov_weights(p, gamma=0.01)
    val = lyapunov_phi(np.array([3.0]), np.array([0.4]), w, p.chemo, p.psi)
    # independent transcription with M(x) = -sqrt(1 + x^2)
    z = 0.4 * (-3 / math.sqrt(10))
    expected = (1 - 0.01 * z - (1 / 3) * 0.01 * abs(z)) * math.exp(0.01 * math.sqrt(10))
    assert float(val) == pytest.approx(expected, rel=1e-14)


def test_phi_at_critical_point(ref_params):
    w = foster_lyapunov_weights(ref_params)
    val = lyapunov_phi(np.array([0.0]), np.array([0.3]), w, ref_params.chemo, ref_params.psi)
    assert float(val) == pytest.approx(math.exp(w.gamma), rel=1e-15)


@pytest.mark.parametrize("psi", [sign_response(), tanh_response(2.0)])
def test_phi_sandwich_on_grid(psi, ref_grid):
    p = make_params(1, 0.5, psi, smoothed_cone(0.0, 1.0, 1))
    w = foster_lyapunov_weights(p)
    _, phi = lstar_phi(ref_grid, p, w)
    e = np.exp(-w.gamma * p.chemo.value(ref_grid.points))[:, None]
    assert np.all(phi >= 0.5 * e - 1e-12) and np.all(phi <= 1.5 * e + 1e-12)


def test_lstar_constant_is_zero(ref_params, ref_grid):
    w = foster_lyapunov_weights(ref_params)
    w0 = type(w)(**{**w.__dict__, "gamma": 0.0})
    L, phi = lstar_phi(ref_grid, ref_params, w0)
    assert np.all(phi == 1.0) and np.max(np.abs(L)) == 0.0


def test_lstar_transport_matches_finite_differences(tanh_params):
    grid = PhaseGrid(1, 6.0, 60, 8)
    w = foster_lyapunov_weights(tanh_params)
    L, phi = lstar_phi(grid, tanh_params, w)
    h = 1e-5
    x = grid.points[:, None, :]
    v = grid.v[None, :, :]
    dphi = (lyapunov_phi(x + h, v, w, tanh_params.chemo, tanh_params.psi)
            - lyapunov_phi(x - h, v, w, tanh_params.chemo, tanh_params.psi)) / (2 * h)
    st = Stepper(tanh_params, grid)
    jump = st.lam * (np.sum(phi * grid.wv, -1, keepdims=True) - phi)
    assert np.allclose(L - jump, grid.v[:, 0] * dphi, atol=1e-6)


# ---- drift -----------------------------------------------------------------

def test_drift_certificate_reference(ref_params, ref_grid):
    w = foster_lyapunov_weights(ref_params)
    cert = verify_drift(ref_params, w, ref_grid)
    assert cert.passed and cert.worst_slack <= 1e-8
    assert cert.A >= 0 and math.isfinite(cert.Aprime)
    # closed form of A' with the supremum over the drift ball
    s = ball_sup(ref_params.chemo, w.R_drift, w.gamma)
    Ap = (6 * w.C1 * w.V0 ** 2 * 1.5 / (0.25 * 0.5 * 0.5 * w.m_star ** w.k)) * s
    assert cert.Aprime == pytest.approx(Ap, rel=1e-12)


def test_drift_certificate_at_confinement_radius(ref_params, ref_grid):
    w = foster_lyapunov_weights(ref_params)
    cert = verify_drift(ref_params, w, ref_grid, R_check=w.R)
    assert cert.worst_slack <= 1e-8


def test_moment_bound_along_trajectory(ref_params, ref_grid):
    w = foster_lyapunov_weights(ref_params)
    cert = verify_drift(ref_params, w, ref_grid)
    _, phi = lstar_phi(ref_grid, ref_params, w)
    st = Stepper(ref_params, ref_grid)
    s = bump_state(ref_grid, 2.0)
    m0 = ref_grid.integrate(phi * s.f)
    for _ in range(int(round(20 / ref_grid.dt))):
        s = st.step(s)
        m = ref_grid.integrate(phi * s.f)
        bound = moment_bound(m0, cert.Aprime, cert.decay_const, s.time)
        assert m <= bound * (1 + 1e-6)


# ---- minorisation ----------------------------------------------------------

def test_minorisation_bound_examples():
    T, a = minorisation_bound(0.5, 1.0, 0.5, 1)
    assert T == 5.0
    assert a == pytest.approx(0.25 * math.exp(-7.5) / 5, rel=1e-14)
    assert a == pytest.approx(2.765e-5, rel=1e-3)
    assert minorisation_bound(0.5, 0.0, 0.5, 1)[0] == 3.0
    assert minorisation_bound(0.999999, 1.0, 0.5, 1)[1] < 1e-15
    T2, la = log_minorisation_bound(0.5, 1.0, 0.5, 1)
    assert la == pytest.approx(math.log(a), rel=1e-14)


def test_minorisation_grid(ref_params, ref_grid):
    T, a = minorisation_bound(0.5, 1.0, 0.5, 1)
    cert = verify_minorisation(ref_params, ref_grid, T, a, Rstar=1.0)
    assert len(cert.per_start) == 11
    assert cert.passed and cert.alpha_observed >= 0.9 * a


def test_minorisation_chi_zero_wide_margin(ref_params, ref_grid):
    p = make_params(1, 0.0, sign_response(), smoothed_cone(0.0, 1.0, 1), lambda_tilde=0.25)
    T, a = minorisation_bound(0.0, 1.0, 0.5, 1)
    starts = minorisation_starts(1, 1.0, 0.5, n_random=2)
    cert = verify_minorisation(p, ref_grid, T, a, starts=starts)
    assert cert.passed and cert.alpha_observed > 5 * a


def test_minorisation_starts_adversarial():
    s = minorisation_starts(2, 1.5, 0.56, n_random=10, seed=3)
    assert len(s) == 11
    assert np.allclose(s[0][0], [1.5, 0.0]) and np.allclose(s[0][1], [0.56, 0.0])
    assert all(np.linalg.norm(x) <= 1.5 and np.linalg.norm(v) <= 0.56 for x, v in s)


def test_minorisation_particles(ref_params):
    T, a = minorisation_bound(0.5, 1.0, 0.5, 1)
    cert = verify_minorisation_particles(ref_params, T, a, [1.0], [0.5], 10 ** 5, seed=7)
    assert cert.passed and cert.lower_confidence >= a


def test_clopper_pearson():
    assert clopper_pearson_lower(0, 100) == 0.0
    lo = clopper_pearson_lower(50, 100, 0.99)
    assert 0.37 < lo < 0.5


# ---- Harris ----------------------------------------------------------------

def test_harris_worked_example():
    r = harris_rate(0.5, 0.5, 1.0, 8.0, 1.0, lambda0=0.75, alpha0=0.25)
    assert r.betaH == pytest.approx(0.25)
    assert r.alphaBar == pytest.approx(0.875, abs=1e-4)
    assert r.C == pytest.approx(1.1429, abs=1e-4)
    assert r.sigma == pytest.approx(0.13353, abs=1e-4)
    r2 = harris_rate(0.5, 0.5, 1.0, 8.0, 2.0, lambda0=0.75, alpha0=0.25)
    assert r2.sigma == pytest.approx(r.sigma / 2, rel=1e-14) and r2.C == r.C


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(1e-6, 0.9), lf=st.floats(1e-6, 0.9), K=st.floats(0.0, 10.0),
       slack=st.floats(1.01, 100.0), T=st.floats(0.1, 100.0))
def test_harris_alpha_bar_in_unit_interval(alpha, lf, K, slack, T):
    R = max(2 * K / (1 - alpha), 2 * K / (1 - lf)) * slack + 1e-9
    r = harris_rate(alpha, lf, K, R, T)
    assert 0 < r.alphaBar < 1 and r.C > 1 and r.sigma > 0
    assert lf + 2 * K / R <= r.lambda0 * (1 + 1e-12) < 1
    assert 0 < r.alpha0 < r.alpha


def test_harris_infeasible_radius():
    with pytest.raises(InfeasibleRadiusError):
        harris_rate(0.5, 0.5, 1.0, 3.0, 1.0)


def test_harris_underflow_keeps_logs():
    r = harris_rate(mpmath.exp(-2000), 0.9, 1.0, 100.0, 1000.0)
    assert r.sigma == 0.0
    assert r.log_sigma == pytest.approx(-2000 - math.log(1000) + math.log(1.5), abs=1e-6)


def test_doeblin_bound():
    assert doeblin_decay_bound(0.5, 3) == pytest.approx(0.125)
    assert doeblin_decay_bound(0.5, 0) == 1.0
    a = 2.765e-5
    assert doeblin_decay_bound(a, math.ceil(math.log(2) / a)) <= 0.5


def test_certified_rate_reference(ref_params):
    cr = certified_rate(ref_params)
    w = cr.weights
    assert cr.R_level > 2 * cr.Aprime
    assert cr.T == pytest.approx(3 + cr.R_star / ref_params.V0)
    assert cr.lambdaFL == pytest.approx(math.exp(-w.decay_const * cr.T))
    assert cr.K == pytest.approx(cr.Aprime * (1 - cr.lambdaFL), rel=1e-12)
    assert cr.log_alpha == pytest.approx(log_minorisation_bound(0.5, cr.R_star, 0.5, 1)[1])
    assert cr.log_sigma < 0 and math.isfinite(cr.log_sigma)
    assert cr.C >= 1
