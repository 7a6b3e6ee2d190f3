import math

import numpy as np
import pytest

from rtlab.errors import ConfigError, UnsupportedResponseError
from rtlab.grid import KineticState, PhaseGrid, Stepper, bump_state, convergence_rate, evolve, weighted_norm
from rtlab.nonlinear import (BumpKernel, CouplingSpec, FamilyEnvelope, G_map, PerturbedProfile,
                             eta_threshold, eta_threshold_value, family_params, family_weights,
                             initial_data_bound, nonlinear_constants, nonlinear_evolve,
                             perturbation_residual, semigroup_difference, solve_fixed_point,
                             w1inf_distance)
from rtlab.norms import StarStar


@pytest.fixture(scope="module")
def kernel():
    return BumpKernel(1.0, 1.0, 1)


@pytest.fixture(scope="module")
def spec(tanh_params, kernel):
    base = CouplingSpec(tanh_params.chemo, kernel, 0.0)
    th = eta_threshold(family_params(base, tanh_params), kernel)
    return base.with_eta(th / 10)


@pytest.fixture(scope="module")
def fixed_point(spec, tanh_params, small_grid):
    return solve_fixed_point(spec, tanh_params, small_grid, ss_tol=1e-10)


def random_rho(grid, rng):
    """Positive probability density made of a few Gaussian bumps."""
    rho = np.zeros(grid.nx)
    for c, w in zip(rng.uniform(-4, 4, 3), rng.uniform(0.3, 2.0, 3)):
        rho += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((grid.x1 - c) / w) ** 2)
    return rho / (rho.sum() * grid.dx)


# ---- kernel ----------------------------------------------------------------

def test_bump_kernel_sup_norms_match_fine_grid(kernel):
    x = np.linspace(-1.5, 1.5, 300001)
    h = x[1] - x[0]
    N = kernel(x[:, None])
    assert N.min() >= 0 and np.all(N[np.abs(x) >= 1] == 0)
    dN = np.gradient(N, h)
    d2N = np.gradient(dN, h)
    assert kernel.sup == pytest.approx(N.max(), rel=0.01)
    assert kernel.grad_sup == pytest.approx(np.abs(dN).max(), rel=0.01)
    assert kernel.hess_sup == pytest.approx(np.abs(d2N).max(), rel=0.01)


def test_bump_kernel_d2_gradient_and_hessian(rng):
    k = BumpKernel(2.0, 1.5, 2)
    h = 1e-5
    for y in rng.uniform(-1, 1, (10, 2)):
        _, g, H = k.eval(y)
        fd = np.array([(k(y + h * e) - k(y - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.allclose(g, fd, atol=1e-7)
        fdh = np.array([(k.eval(y + h * e)[1] - k.eval(y - h * e)[1]) / (2 * h) for e in np.eye(2)])
        assert np.allclose(H, fdh, atol=1e-6)


def test_coupling_spec_validation(tanh_params, kernel):
    with pytest.raises(ConfigError):
        CouplingSpec(tanh_params.chemo, kernel, 1.01 / kernel.sup)
    with pytest.raises(ConfigError):
        CouplingSpec(tanh_params.chemo, kernel, -1.0)
    with pytest.raises(ConfigError):
        BumpKernel(0.0, 1.0)


# ---- eta threshold ---------------------------------------------------------

def test_eta_threshold_example():
    th = eta_threshold_value(0.25, 0.5, 0.5, 1, 0.5, 1.0, 1.0)
    # 0.25 * 0.5 * 0.5 * 0.5 / (48 * 0.5 * 1.5 * 0.5)
    assert th == pytest.approx(0.03125 / 18, rel=1e-14)
    assert th == pytest.approx(1.736e-3, abs=1e-6)
    assert eta_threshold_value(0.25, 0.5, 0.5, 1, 0.5, 1.0, 2.0) == pytest.approx(th / 2, rel=1e-14)
    assert eta_threshold_value(0.25, 0.5, 1e-12, 1, 0.5, 1.0, 1.0) < 1e-13
    assert eta_threshold_value(0.25, 0.5, 0.5, 1, 0.5, 1.0, 1.0, N_sup=1e4) == 1e-4


def test_eta_threshold_rejects_sign(ref_params, kernel):
    with pytest.raises(UnsupportedResponseError):
        eta_threshold(ref_params, kernel)
    with pytest.raises(UnsupportedResponseError):
        eta_threshold_value(0.25, 0.5, 0.5, 1, 0.5, math.inf, 1.0)


# ---- perturbed profiles ----------------------------------------------------

def test_perturbed_profile_derivatives(spec, small_grid, rng):
    M = PerturbedProfile.from_rho(spec.with_eta(0.05), small_grid, random_rho(small_grid, rng))
    h = 1e-5
    x = rng.uniform(-6, 6, (15, 1))
    fd = (M.value(x + h) - M.value(x - h)) / (2 * h)
    assert np.allclose(M.grad(x)[:, 0], fd, atol=1e-8)
    fdh = (M.grad(x + h) - M.grad(x - h))[:, 0] / (2 * h)
    assert np.allclose(M.hess(x)[:, 0, 0], fdh, atol=1e-6)


def test_family_envelope_bounds_members(spec, small_grid, rng):
    s = spec.with_eta(0.05)
    env = FamilyEnvelope(s)
    x = rng.uniform(-9, 9, (500, 1))
    for _ in range(5):
        M = PerturbedProfile.from_rho(s, small_grid, random_rho(small_grid, rng))
        assert np.all(M.value(x) >= env.value(x) - 1e-14)
        assert np.all(M.hess_norm(x) <= env.hess_norm(x) + 1e-12)
        assert np.all(np.abs(M.grad(x)) <= env.grad_sup + 1e-12)
        out = x[np.abs(x[:, 0]) > env.R]
        assert np.all(np.abs(M.grad(out)) >= env.m_star - 1e-12)


# ---- the map G -------------------------------------------------------------

def test_G_with_zero_eta_returns_base(tanh_params, kernel, small_grid, rng):
    s = CouplingSpec(tanh_params.chemo, kernel, 0.0)
    M = PerturbedProfile.from_rho(s, small_grid, random_rho(small_grid, rng))
    G, _ = G_map(M, s, tanh_params, small_grid)
    X = small_grid.points
    assert np.array_equal(G.value(X), tanh_params.chemo.value(X))
    assert np.array_equal(G.grad(X), tanh_params.chemo.grad(X))


def test_G_stays_close_to_base_and_steady_states_uniformly_bounded(spec, tanh_params, small_grid,
                                                                  rng):
    s = spec.with_eta(2e-4)
    X = small_grid.points
    w = family_weights(s, tanh_params)
    consts = nonlinear_constants(s, tanh_params, small_grid)
    norms = []
    for _ in range(10):
        M = PerturbedProfile.from_rho(s, small_grid, random_rho(small_grid, rng))
        G, finf = G_map(M, s, tanh_params, small_grid, tol=1e-8, delta=w.delta)
        assert np.max(np.abs(G.value(X) - tanh_params.chemo.value(X))) <= s.eta * s.kernel.sup
        assert np.max(np.abs(G.grad(X) - tanh_params.chemo.grad(X))) <= s.eta * s.kernel.grad_sup
        norms.append(weighted_norm(finf, StarStar(w.delta)))
    assert max(norms) <= consts.C_tilde


def test_G_rejects_foreign_profile(spec, tanh_params, small_grid):
    with pytest.raises(ConfigError):
        G_map(tanh_params.chemo, spec, tanh_params, small_grid)


def test_G_contracts_on_sampled_pairs(spec, tanh_params, small_grid, rng):
    w = family_weights(spec, tanh_params)
    for _ in range(3):
        M1 = PerturbedProfile.from_rho(spec, small_grid, random_rho(small_grid, rng))
        M2 = PerturbedProfile.from_rho(spec, small_grid, random_rho(small_grid, rng))
        G1, _ = G_map(M1, spec, tanh_params, small_grid, tol=1e-10, delta=w.delta)
        G2, _ = G_map(M2, spec, tanh_params, small_grid, tol=1e-10, delta=w.delta)
        ratio = w1inf_distance(G1, G2, small_grid) / w1inf_distance(M1, M2, small_grid)
        assert ratio <= 0.5


# ---- fixed point -----------------------------------------------------------

def test_fixed_point_zero_eta_one_iteration(tanh_params, kernel, small_grid):
    s = CouplingSpec(tanh_params.chemo, kernel, 0.0)
    M, _, trace = solve_fixed_point(s, tanh_params, small_grid)
    assert trace.converged and len(trace.residuals) == 1 and trace.residuals[0] == 0.0
    X = small_grid.points
    assert np.array_equal(M.value(X), tanh_params.chemo.value(X))


def test_fixed_point_reference(fixed_point, spec, tanh_params, small_grid):
    M, finf, trace = fixed_point
    assert trace.converged and len(trace.residuals) <= 30
    assert trace.residuals[-1] <= 1e-6
    assert all(r <= 0.5 for r in trace.ratios)
    # the stationary state of the final map is also stationary for M itself
    p = tanh_params.with_chemo(M)
    nxt = Stepper(p, small_grid).step(finf)
    delta = family_weights(spec, tanh_params).delta
    res = weighted_norm(nxt.f / nxt.mass - finf.f, StarStar(delta), small_grid) / small_grid.dt
    assert res < 1e-6


def test_fixed_point_warns_above_threshold(tanh_params, kernel, small_grid):
    s = CouplingSpec(tanh_params.chemo, kernel, 2e-4)
    assert s.eta > eta_threshold(family_params(s, tanh_params), kernel)
    with pytest.warns(UserWarning):
        solve_fixed_point(s, tanh_params, PhaseGrid(1, 6.0, 60, 16), ss_tol=1e-6)


# ---- perturbation machinery ------------------------------------------------

def test_perturbation_residual_trivial_cases(fixed_point, spec, tanh_params, small_grid):
    M, finf, _ = fixed_point
    delta = family_weights(spec, tanh_params).delta
    f = bump_state(small_grid, 2.0)
    h, _ = perturbation_residual(f, M, M, tanh_params, finf, spec, delta)
    assert h == 0.0
    p0 = tanh_params.with_chi(0.0)
    h0, _ = perturbation_residual(f, M, tanh_params.chemo, p0, finf, spec, delta)
    assert h0 == 0.0


def test_perturbation_inequality_mid_trajectory(fixed_point, spec, tanh_params, small_grid):
    M, finf, _ = fixed_point
    delta = family_weights(spec, tanh_params).delta
    f = evolve(bump_state(small_grid, 2.0), tanh_params, 3.0)
    f = KineticState(f.f / f.mass, small_grid, f.time)
    Mt = PerturbedProfile.from_rho(spec, small_grid, f.rho)
    h, bound = perturbation_residual(f, M, Mt, tanh_params, finf, spec, delta)
    assert 0 < h <= bound + 1e-8


def test_initial_data_bound():
    # 0.01 / (4 * 1e-4 * 0.5 * 0.5 * 2) = 50, then (50 - 10) / 4
    assert initial_data_bound(0.1, 1e-4, 0.5, 0.5, 2.0, 10.0, 1.0, 1.0) == pytest.approx(10.0)
    assert initial_data_bound(0.1, 0.0, 0.5, 0.5, 2.0, 10.0, 1.0, 1.0) == math.inf
    assert initial_data_bound(0.1, 1e-12, 0.5, 0.5, 2.0, 10.0, 1.0, 1.0) > 1e8
    assert initial_data_bound(0.1, 1e-2, 0.5, 0.5, 2.0, 10.0, 1.0, 1.0) < 0


def test_nonlinear_constants(spec, tanh_params, small_grid):
    c = nonlinear_constants(spec, tanh_params, small_grid)
    assert c.eta == spec.eta and spec.eta < c.eta_threshold
    assert c.eta_threshold_gamma == pytest.approx(c.gamma * c.eta_threshold, rel=1e-12)
    assert c.delta <= c.gamma
    assert math.isfinite(c.C_tilde) and math.isfinite(c.D) and c.D > 0
    if c.B <= 0:
        assert c.C_star == math.inf
    else:
        assert c.C_star == pytest.approx(c.K1 * c.A / c.B)


# ---- evolution -------------------------------------------------------------

def test_evolve_from_fixed_point_is_stationary(spec, tanh_params):
    g = PhaseGrid(1, 10.0, 200, 32, boundary="periodic")
    _, finf, _ = solve_fixed_point(spec, tanh_params, g, ss_tol=1e-12)
    rec, _ = nonlinear_evolve(finf, spec, tanh_params, 5.0, finf)
    assert max(r.distance for r in rec) <= 1e-10


def test_evolve_zero_eta_matches_linear(tanh_params, kernel, small_grid):
    s = CouplingSpec(tanh_params.chemo, kernel, 0.0)
    f0 = bump_state(small_grid, 2.0)
    _, end = nonlinear_evolve(f0, s, tanh_params, 3.0, f0)
    lin = evolve(f0, tanh_params, 3.0)
    assert np.allclose(end.f, lin.f, rtol=1e-13, atol=1e-16)


def test_evolve_moment_bound_and_perturbation(fixed_point, spec, tanh_params, small_grid):
    M, finf, _ = fixed_point
    c = nonlinear_constants(spec, tanh_params, small_grid)
    f0 = bump_state(small_grid, 2.0)
    rec, _ = nonlinear_evolve(f0, spec, tanh_params, 20.0, finf, Mtilde=M)
    n0 = rec[0].norm
    assert all(r.norm <= c.C_star + 4 * n0 for r in rec)
    assert all(r.h_norm <= r.h_bound + 1e-8 for r in rec)
    t = np.array([r.t for r in rec])
    d = np.array([r.distance for r in rec])
    rate, _ = convergence_rate(np.column_stack([t, d]))
    assert rate >= c.sigma / 2


def test_evolve_dt_halving_first_order(fixed_point, spec, tanh_params):
    ends = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        g = PhaseGrid(1, 10.0, 200, 32, dt=dt)
        _, end = nonlinear_evolve(bump_state(g, 2.0), spec.with_eta(2e-4), tanh_params, 2.0,
                                  bump_state(g, 2.0))
        ends.append(end.rho)
    e = [np.sum(np.abs(a - ends[-1])) * 0.05 for a in ends[:-1]]
    assert e[1] < e[0] and e[2] < e[1]


def test_semigroup_continuity_in_profile(spec, tanh_params, small_grid, rng):
    delta = family_weights(spec, tanh_params).delta
    f0 = bump_state(small_grid, 2.0)
    rho = random_rho(small_grid, rng)
    consts = []
    for eta in (0.01, 0.02, 0.04, 0.08):
        M2 = PerturbedProfile.from_rho(spec.with_eta(eta), small_grid, rho)
        for T in (1.0, 5.0):
            diff, dg = semigroup_difference(f0, tanh_params.chemo, M2, tanh_params, T, delta)
            assert dg > 0
            consts.append(diff / dg)
    assert np.all(np.isfinite(consts)) and max(consts) < 100
