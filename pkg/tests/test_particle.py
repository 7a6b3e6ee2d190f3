import math

import numpy as np
import pytest
from scipy import stats

from rtlab.errors import ConfigError
from rtlab.grid import KineticState, PhaseGrid, evolve, uniform_state
from rtlab.model import custom_profile, make_params, sign_response
from rtlab.norms import PlainTV
from rtlab.particle import (ParticleEnsemble, advance, empirical_density, empirical_rho,
                            empirical_weighted_distance, ensemble_to_csv, first_tumble_times,
                            marginal_tv, sample_uniform_ball)


def flat_params(chi, d=1):
    prof = custom_profile(lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros_like(x),
                          lambda x: np.zeros(x.shape + (x.shape[-1],)), d=d, grad_sup=1.0,
                          R=1.0, m_star=0.5, check=False)
    return make_params(d, chi, sign_response(), prof, lambda_tilde=0.25)


def test_sample_uniform_ball_d1():
    rng = np.random.default_rng(0)
    v = sample_uniform_ball(1, 0.5, rng, 10 ** 6)
    assert abs(v.mean()) <= 3e-3 * 0.5
    assert np.all(np.abs(v) <= 0.5)


def test_sample_uniform_ball_d2():
    rng = np.random.default_rng(1)
    V0 = 1 / math.sqrt(math.pi)
    v = sample_uniform_ball(2, V0, rng, 10 ** 5)
    r2 = np.sum(v * v, axis=1)
    se = r2.std() / math.sqrt(r2.size)
    assert abs(r2.mean() - V0 ** 2 / 2) <= 3 * se
    assert np.all(np.sqrt(r2) <= V0)
    assert sample_uniform_ball(2, V0, rng).shape == (2,)


def test_constant_rate_tumble_times_are_exponential():
    # grad M = 0: accepted tumbles form a rate-1 Poisson process for any chi
    p = flat_params(0.7)
    ens = ParticleEnsemble.sample(10 ** 5, 1, lambda rng, m: np.zeros((m, 1)), seed=3)
    t = first_tumble_times(ens, p, 50.0)
    assert np.isfinite(t).all()
    ks = stats.kstest(t, "expon").statistic
    assert ks < 1.36 / math.sqrt(t.size)


def test_chi_zero_displacement_before_first_tumble():
    p = flat_params(0.0)
    ens = ParticleEnsemble.sample(2000, 1, lambda rng, m: rng.uniform(-1, 1, (m, 1)), seed=5)
    t = first_tumble_times(ens, p, 10.0)
    dt = 0.5 * np.min(t)
    out = advance(ens, p, dt)
    assert np.allclose(out.positions, ens.positions + ens.velocities * dt, atol=1e-15)
    assert np.array_equal(out.velocities, ens.velocities)


def test_velocity_marginal_stays_uniform():
    p = flat_params(0.5)
    ens = ParticleEnsemble.sample(10 ** 5, 1, lambda rng, m: np.zeros((m, 1)), seed=8)
    out = advance(ens, p, 3.0)
    ks = stats.kstest(out.velocities[:, 0], "uniform", args=(-0.5, 1.0)).statistic
    assert ks < 1.63 / math.sqrt(out.n)
    assert np.all(np.abs(out.velocities) <= 0.5)
    assert out.n == ens.n


def test_particles_match_grid(ref_params):
    grid = PhaseGrid(1, 10.0, 400, 64)
    f0 = np.zeros(grid.shape)
    inside = np.abs(grid.x1 - 2.0) <= 0.5
    f0[inside] = 1.0
    s0 = KineticState(f0 / grid.integrate(f0), grid)
    sT = evolve(s0, ref_params, 10.0)
    ens = ParticleEnsemble.sample(10 ** 5, 1, lambda rng, m: rng.uniform(1.5, 2.5, (m, 1)), seed=11)
    ens = advance(ens, ref_params, 10.0)
    assert marginal_tv(ens, sT, 100) <= 0.05


def test_reproducible_and_worker_independent(ref_params):
    ens = ParticleEnsemble.sample(20000, 1, lambda rng, m: rng.normal(0, 1, (m, 1)), seed=42)
    a = advance(advance(ens, ref_params, 2.0), ref_params, 1.0)
    b = advance(advance(ens, ref_params, 2.0), ref_params, 1.0)
    c = advance(advance(ens, ref_params, 2.0, workers=3), ref_params, 1.0, workers=2)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
    assert np.array_equal(a.positions, c.positions) and np.array_equal(a.velocities, c.velocities)
    d = advance(ParticleEnsemble.sample(20000, 1, lambda rng, m: rng.normal(0, 1, (m, 1)), seed=43),
                ref_params, 3.0)
    assert not np.array_equal(a.positions, d.positions)


def test_empirical_density_single_particle():
    grid = PhaseGrid(1, 2.0, 20, 8)
    ens = ParticleEnsemble(np.array([[grid.x1[7]]]), np.array([[grid.v[3, 0]]]))
    s = empirical_density(ens, grid)
    assert s.f[7, 3] > 0 and np.count_nonzero(s.f) == 1
    assert s.mass == pytest.approx(1.0)


def test_empirical_density_overflow_and_flatness():
    grid = PhaseGrid(1, 1.0, 10, 4)
    rng = np.random.default_rng(2)
    n = 400000
    x = rng.uniform(-1.25, 1.25, (n, 1))
    v = sample_uniform_ball(1, 0.5, rng, n)
    s = empirical_density(ParticleEnsemble(x, v), grid)
    inside = np.mean(np.abs(x[:, 0]) < 1.0)
    assert s.outflow == pytest.approx(1 - inside, abs=1e-12)
    assert s.mass + s.outflow == pytest.approx(1.0, abs=1e-12)
    cells = grid.nx * grid.nv
    expect = np.full(grid.shape, 1 / 2.5)
    per_cell = n * inside / cells
    assert np.all(np.abs(s.f - expect) <= 3 / math.sqrt(per_cell) * expect + 1e-12)


def test_empirical_distances(ref_params):
    grid = PhaseGrid(1, 4.0, 100, 4)
    rng = np.random.default_rng(9)
    a = ParticleEnsemble(rng.uniform(-3, -1, (5000, 1)), sample_uniform_ball(1, 0.5, rng, 5000))
    b = ParticleEnsemble(rng.uniform(1, 3, (5000, 1)), sample_uniform_ball(1, 0.5, rng, 5000))
    assert empirical_weighted_distance(a, a, PlainTV(), grid) == 0.0
    assert empirical_weighted_distance(a, b, PlainTV(), grid) == pytest.approx(2.0)


def test_same_law_samples_are_close():
    r1 = np.random.default_rng(1).normal(0, 1, 10 ** 5)
    r2 = np.random.default_rng(2).normal(0, 1, 10 ** 5)
    h = 10.0 / 100
    assert np.sum(np.abs(empirical_rho(r1, 5, 100) - empirical_rho(r2, 5, 100))) * h <= 0.05


def test_ensemble_validation_and_csv(tmp_path):
    with pytest.raises(ConfigError):
        ParticleEnsemble(np.zeros((3, 1)), np.zeros((3, 2)))
    ens = ParticleEnsemble.at_point(3, [1.0], [0.2])
    ensemble_to_csv(ens, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "id,x1,v1"
    with pytest.raises(ConfigError):
        advance(ens, flat_params(0.1), 0.0)


def test_marginal_tv_requires_divisible_bins():
    grid = PhaseGrid(1, 1.0, 10, 4)
    ens = ParticleEnsemble.at_point(3, [0.0], [0.1])
    with pytest.raises(ConfigError):
        marginal_tv(ens, uniform_state(grid), 3)
