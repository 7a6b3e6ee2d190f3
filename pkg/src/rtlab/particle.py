"""Exact simulation of the velocity-jump process.

Walkers run in straight lines and tumble at rate ``lambda(v . grad M(x))``.
Tumble times are generated by thinning: candidate times come from a Poisson
clock at the global majorant ``1 + chi`` and a candidate at position ``x`` is
accepted with probability ``lambda / (1 + chi)``. On acceptance the velocity
is redrawn uniformly on the ball. No time discretisation is involved.

Random numbers come from one Philox stream per block of walkers, keyed by
``(seed, block, epoch)`` where ``epoch`` counts calls to :func:`advance`, so
results do not depend on how blocks are distributed over workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .grid import KineticState, PhaseGrid, weighted_norm
from .model import ModelParams, velocity_ball_radius

__all__ = [
    "ParticleEnsemble",
    "sample_uniform_ball",
    "advance",
    "first_tumble_times",
    "empirical_density",
    "empirical_rho",
    "empirical_weighted_distance",
    "marginal_tv",
    "ensemble_to_csv",
]

BLOCK = 8192


def sample_uniform_ball(d: int, V0: float, rng: np.random.Generator, size=None):
    """Uniform draws on the centred ball of radius ``V0``.

    Returns shape ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    n = 1 if size is None else int(size)
    if d == 1:
        out = rng.uniform(-V0, V0, size=(n, 1))
    else:
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        out = g * (V0 * rng.random(n) ** (1.0 / d))[:, None]
    return out[0] if size is None else out


def _block_rng(seed: int, block: int, epoch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block, epoch])))


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2:
            raise ConfigError("positions and velocities must both have shape (N, d)")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def at_point(cls, n: int, x0, v0, seed: int = 0) -> "ParticleEnsemble":
        d = np.size(x0)
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, d), (n, 1))
        v = np.tile(np.asarray(v0, dtype=float).reshape(1, d), (n, 1))
        return cls(x, v, 0.0, seed, 0)

    @classmethod
    def sample(cls, n: int, d: int, x_sampler, seed: int = 0) -> "ParticleEnsemble":
        """Positions from ``x_sampler(rng, n)``, velocities uniform on the ball.

        Draws use the stream of epoch -1 so they never collide with the
        streams consumed by :func:`advance`.
        """
        V0 = velocity_ball_radius(d)
        xs, vs = [], []
        for b, lo in enumerate(range(0, n, BLOCK)):
            m = min(BLOCK, n - lo)
            rng = _block_rng(seed, b, 2 ** 32 - 1)
            xs.append(np.asarray(x_sampler(rng, m), dtype=float).reshape(m, d))
            vs.append(sample_uniform_ball(d, V0, rng, m))
        return cls(np.vstack(xs), np.vstack(vs), 0.0, seed, 0)


def _advance_block(x, v, t_end, params: ModelParams, rng, record_first=False):
    d, V0 = params.d, params.V0
    lam_bar = 1.0 + params.chi
    chem, rate = params.chemo, params.rate
    x, v = x.copy(), v.copy()
    n = x.shape[0]
    t = np.zeros(n)
    first = np.full(n, np.inf)
    active = np.arange(n)
    while active.size:
        e = rng.exponential(1.0 / lam_bar, size=active.size)
        u = rng.random(active.size)
        tn = t[active] + e
        done = tn >= t_end
        fin = active[done]
        x[fin] += v[fin] * (t_end - t[fin])[:, None]
        t[fin] = t_end
        go = active[~done]
        x[go] += v[go] * e[~done][:, None]
        t[go] = tn[~done]
        if go.size:
            z = np.sum(v[go] * chem.grad(x[go]), axis=-1)
            acc = u[~done] * lam_bar < rate(z)
            tumbled = go[acc]
            v[tumbled] = sample_uniform_ball(d, V0, rng, tumbled.size)
            if record_first:
                new = tumbled[np.isinf(first[tumbled])]
                first[new] = t[new]
        active = go
    return x, v, first


def _run_blocks(ens: ParticleEnsemble, params: ModelParams, dt: float, workers: int,
                record_first: bool):
    starts = list(range(0, ens.n, BLOCK))

    def job(b):
        lo = starts[b]
        hi = min(lo + BLOCK, ens.n)
        rng = _block_rng(ens.seed, b, ens.epoch)
        return _advance_block(ens.positions[lo:hi], ens.velocities[lo:hi], dt, params, rng,
                              record_first)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(starts))))
    else:
        parts = [job(b) for b in range(len(starts))]
    x = np.vstack([p[0] for p in parts]) if parts else ens.positions.copy()
    v = np.vstack([p[1] for p in parts]) if parts else ens.velocities.copy()
    first = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    return x, v, first


def advance(ens: ParticleEnsemble, params: ModelParams, dt: float,
            workers: int = 1) -> ParticleEnsemble:
    """Evolve every walker exactly over a time ``dt``."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if ens.d != params.d:
        raise ConfigError("ensemble and model dimensions differ")
    x, v, _ = _run_blocks(ens, params, dt, workers, False)
    return replace(ens, positions=x, velocities=v, time=ens.time + dt, epoch=ens.epoch + 1)


def first_tumble_times(ens: ParticleEnsemble, params: ModelParams, t_max: float,
                       workers: int = 1):
    """Time of the first accepted tumble of each walker (``inf`` if none by ``t_max``)."""
    _, _, first = _run_blocks(ens, params, t_max, workers, True)
    return first


# ---------------------------------------------------------------------------
# empirical measures

def _velocity_bins(grid: PhaseGrid, v):
    if grid.d == 1:
        j = np.floor((v[:, 0] + grid.V0) / (2 * grid.V0) * grid.nv).astype(int)
        return np.clip(j, 0, grid.nv - 1)
    r2 = np.sum(v * v, axis=1) / grid.V0 ** 2
    ir = np.clip(np.floor(r2 * grid.n_radial).astype(int), 0, grid.n_radial - 1)
    th = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
    ia = np.clip(np.floor(th / (2 * np.pi) * grid.n_angle).astype(int), 0, grid.n_angle - 1)
    return ir * grid.n_angle + ia


def empirical_density(ens: ParticleEnsemble, grid: PhaseGrid) -> KineticState:
    """Phase-space histogram as a density on ``grid``.

    Walkers outside the box are not binned; their fraction is stored in the
    ``outflow`` field, so ``mass + outflow == 1``.
    """
    idx = np.floor((ens.positions + grid.L) / grid.dx).astype(int)
    inside = np.all((idx >= 0) & (idx < grid.nx), axis=1)
    j = _velocity_bins(grid, ens.velocities)
    flat = np.ravel_multi_index(tuple(idx[inside].T) + (j[inside],), grid.shape)
    counts = np.bincount(flat, minlength=int(np.prod(grid.shape))).reshape(grid.shape)
    f = counts / (ens.n * grid.cell * grid.wv)
    return KineticState(f, grid, ens.time, float(1.0 - inside.mean()))


def empirical_rho(positions, L: float, n_bins: int):
    """Histogram density of 1-D positions on ``n_bins`` equal bins of ``[-L, L]``."""
    x = np.asarray(positions, dtype=float).reshape(-1)
    h, _ = np.histogram(x, bins=n_bins, range=(-L, L))
    return h / (x.size * (2 * L / n_bins))


def _as_state(obj, grid):
    if isinstance(obj, ParticleEnsemble):
        return empirical_density(obj, grid)
    return obj


def empirical_weighted_distance(a, b, norm, grid: PhaseGrid) -> float:
    """Weighted L1 distance between two ensembles or an ensemble and a state."""
    sa, sb = _as_state(a, grid), _as_state(b, grid)
    return weighted_norm(sa.f - sb.f, norm, grid)


def marginal_tv(ens: ParticleEnsemble, state: KineticState, n_bins: int = 100) -> float:
    """L1 distance between spatial marginals on ``n_bins`` coarse bins (d = 1)."""
    grid = state.grid
    if grid.d != 1 or grid.nx % n_bins:
        raise ConfigError("marginal comparison needs d = 1 and nx divisible by n_bins")
    rho = state.rho.reshape(n_bins, -1).mean(axis=1)
    emp = empirical_rho(ens.positions, grid.L, n_bins)
    return float(np.sum(np.abs(rho - emp)) * 2 * grid.L / n_bins)


def ensemble_to_csv(ens: ParticleEnsemble, path) -> None:
    """Columns ``id, x..., v...``."""
    d = ens.d
    names = ["id"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)]
    data = np.column_stack([np.arange(ens.n), ens.positions, ens.velocities])
    fmt = ["%d"] + ["%.17g"] * (2 * d)
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt=fmt)
