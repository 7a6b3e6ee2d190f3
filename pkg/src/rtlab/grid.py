"""Phase-space grid solver for the linear run-and-tumble equation.

The density ``f(x, v)`` lives on cell centres of ``[-L, L]^d`` (``d`` in
{1, 2}) times a quadrature of the unit-volume velocity ball. One time step is
a Strang splitting: half a tumble step, a full transport step, half a tumble
step.

* Transport is semi-Lagrangian with linear interpolation, applied axis by
  axis. Under the CFL restriction ``dt <= dx / V0`` every velocity moves by at
  most one cell, so each shift is a convex combination of two neighbours:
  monotone and exactly conservative up to what leaves the box.
* The tumble step is linear and local in ``x``; it is applied exactly by
  uniformisation. With ``q >= max lambda`` the generator is written as
  ``q (P - I)`` where ``P`` is a nonnegative, mass-preserving averaging
  operator, and ``exp(tau A) = sum_k Poisson(q tau; k) P^k``. Every term is
  nonnegative and conserves ``int f dv`` at each ``x``.
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    InsufficientDecayError,
    InvalidDimensionError,
    NonConvergenceError,
    NumericalInstabilityError,
)
from .model import ModelParams, velocity_ball_radius

__all__ = [
    "PhaseGrid",
    "KineticState",
    "Stepper",
    "step",
    "evolve",
    "jump_operator",
    "weighted_norm",
    "spatial_density",
    "steady_state",
    "SteadyStateReport",
    "convergence_rate",
    "uniform_state",
    "bump_state",
    "dirac_state",
    "save_state",
    "load_state",
    "state_to_csv",
]


class PhaseGrid:
    """Truncated phase-space grid.

    Parameters
    ----------
    d : int
        Space dimension, 1 or 2.
    L : float
        Half-width of the spatial box ``[-L, L]^d``.
    nx : int
        Cells per spatial axis.
    nv : int
        Velocity nodes (``d = 1``) or angular nodes per ring (``d = 2``).
    dt : float, optional
        Time step, default ``dx / V0``.
    n_radial : int
        Number of equal-area rings for ``d = 2``.
    boundary : {"outflow", "periodic"}
    """

    def __init__(self, d: int, L: float, nx: int, nv: int, dt: Optional[float] = None,
                 n_radial: int = 8, boundary: str = "outflow"):
        if d not in (1, 2):
            raise InvalidDimensionError(f"grid solver supports d = 1 or 2, got {d}")
        if not (L > 0 and nx >= 2 and nv >= 2):
            raise ConfigError("grid needs L > 0, nx >= 2, nv >= 2")
        if boundary not in ("outflow", "periodic"):
            raise ConfigError(f"unknown boundary {boundary!r}")
        self.d, self.L, self.nx, self.boundary = d, float(L), int(nx), boundary
        self.V0 = velocity_ball_radius(d)
        self.dx = 2.0 * self.L / self.nx
        # integer offsets keep the grid exactly symmetric about the origin
        self.x1 = (np.arange(self.nx) + 0.5 - self.nx / 2) * self.dx
        if d == 1:
            self.nv = int(nv)
            self.v = ((np.arange(nv) + 0.5 - nv / 2) * (2 * self.V0 / nv))[:, None]
            self.n_radial, self.n_angle = 1, int(nv)
        else:
            nr, na = int(n_radial), int(nv)
            r = self.V0 * np.sqrt((np.arange(nr) + 0.5) / nr)
            th = 2 * np.pi * (np.arange(na) + 0.5) / na
            rr, tt = np.meshgrid(r, th, indexing="ij")
            self.v = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
            self.nv = nr * na
            self.n_radial, self.n_angle = nr, na
        self.wv = np.full(self.nv, 1.0 / self.nv)
        if abs(self.wv.sum() - 1.0) > 1e-10:
            raise ConfigError("velocity weights do not sum to one")
        self.cell = self.dx ** d
        cfl = self.dx / self.V0
        self.dt = cfl if dt is None else float(dt)
        if not 0 < self.dt <= cfl * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} violates CFL dt <= dx/V0 = {cfl}")

    @property
    def spatial_shape(self):
        return (self.nx,) * self.d

    @property
    def shape(self):
        return self.spatial_shape + (self.nv,)

    @functools.cached_property
    def points(self):
        """Spatial nodes, shape ``spatial_shape + (d,)``."""
        if self.d == 1:
            return self.x1[:, None]
        X, Y = np.meshgrid(self.x1, self.x1, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @functools.cached_property
    def radius(self):
        return np.linalg.norm(self.points, axis=-1)

    def integrate(self, f):
        """``int int f dx dv``."""
        return float(np.sum(f * self.wv) * self.cell)

    def __repr__(self):
        return (f"PhaseGrid(d={self.d}, L={self.L}, nx={self.nx}, nv={self.nv}, "
                f"dt={self.dt:.6g}, boundary={self.boundary!r})")


@dataclass(frozen=True)
class KineticState:
    """Snapshot of the density on a grid; ``outflow`` is the cumulative mass
    that left the box through its boundary."""

    f: np.ndarray
    grid: PhaseGrid
    time: float = 0.0
    outflow: float = 0.0

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.f)

    @property
    def rho(self):
        return spatial_density(self)

    def with_f(self, f, **kw):
        return replace(self, f=f, **kw)


def spatial_density(state: KineticState):
    return np.sum(state.f * state.grid.wv, axis=-1)


# ---------------------------------------------------------------------------
# initial data

def uniform_state(grid: PhaseGrid) -> KineticState:
    """Uniform probability density on the box."""
    f = np.full(grid.shape, 1.0 / (2 * grid.L) ** grid.d)
    return KineticState(f, grid)


def bump_state(grid: PhaseGrid, center, width: float = 0.5) -> KineticState:
    """Velocity-uniform probability density with a compact smooth bump in ``x``."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    r = np.linalg.norm(grid.points - c, axis=-1) / width
    g = np.where(r < 1, np.exp(-1.0 / np.maximum(1 - r * r, 1e-300)), 0.0)
    f = np.repeat(g[..., None], grid.nv, axis=-1)
    m = grid.integrate(f)
    if m <= 0:
        raise ConfigError("bump width below grid resolution")
    return KineticState(f / m, grid)


def dirac_state(grid: PhaseGrid, x0, v0) -> KineticState:
    """Unit mass in the single phase-space cell nearest to ``(x0, v0)``."""
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (grid.d,))
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), (grid.d,))
    idx = tuple(int(np.clip(np.floor((x0[a] + grid.L) / grid.dx), 0, grid.nx - 1))
                for a in range(grid.d))
    j = int(np.argmin(np.linalg.norm(grid.v - v0, axis=1)))
    f = np.zeros(grid.shape)
    f[idx + (j,)] = 1.0 / (grid.cell * grid.wv[j])
    return KineticState(f, grid)


# ---------------------------------------------------------------------------
# time stepping

class Stepper:
    """Strang-split stepper with the tumbling rates at the nodes cached.

    ``grad`` overrides the profile gradient at the spatial nodes (used when the
    chemoattractant changes in time).
    """

    def __init__(self, params: ModelParams, grid: PhaseGrid, grad=None):
        if params.d != grid.d:
            raise ConfigError("model and grid dimensions differ")
        self.params, self.grid = params, grid
        if grad is None:
            grad = params.chemo.grad(grid.points)
        self.grad = np.asarray(grad, dtype=float).reshape(grid.spatial_shape + (grid.d,))
        z = self.grad @ grid.v.T  # v . grad M at every (x, v)
        self.lam = params.rate(z)
        self.q = float(max(self.lam.max(), 1e-300))
        self.shifts = grid.v * grid.dt / grid.dx  # cells moved per step, |s| <= 1

    # jump part ---------------------------------------------------------------
    def gain(self, f):
        return np.sum(self.lam * f * self.grid.wv, axis=-1)

    def jump_rhs(self, f):
        return self.gain(f)[..., None] - self.lam * f

    def jump(self, f, tau: float, tail_tol: float = 1e-18):
        """``exp(tau J) f`` by uniformisation."""
        if tau == 0:
            return f.copy()
        mu = self.q * tau
        stay = 1.0 - self.lam / self.q
        out = np.zeros_like(f)
        g = f
        k, pk, total = 0, math.exp(-mu), 0.0
        while True:
            out += pk * g
            total += pk
            if k > mu and pk < tail_tol:
                break
            k += 1
            pk *= mu / k
            g = stay * g + (self.gain(g) / self.q)[..., None]
        return out / total

    # transport part ----------------------------------------------------------
    def transport(self, f):
        grid = self.grid
        out = f
        lost = 0.0
        for a in range(grid.d):
            s = self.shifts[:, a]
            amp = np.abs(s)
            fw = np.moveaxis(out, a, 0)
            if grid.boundary == "periodic":
                up, down = np.roll(fw, 1, axis=0), np.roll(fw, -1, axis=0)
            else:
                zero = np.zeros_like(fw[:1])
                up = np.concatenate([zero, fw[:-1]], axis=0)
                down = np.concatenate([fw[1:], zero], axis=0)
                leave = np.where(s > 0, fw[-1], fw[0]) * amp
                lost += float(np.sum(leave * grid.wv)) * grid.cell
            new = (1.0 - amp) * fw + amp * np.where(s > 0, up, down)
            out = np.moveaxis(new, 0, a)
        return out, lost

    def step(self, state: KineticState) -> KineticState:
        dt = self.grid.dt
        f = self.jump(state.f, 0.5 * dt)
        f, lost = self.transport(f)
        f = self.jump(f, 0.5 * dt)
        fmin = float(f.min()) if f.size else 0.0
        if not np.isfinite(fmin) or fmin < -1e-14:
            raise NumericalInstabilityError(f"density left the admissible range (min f = {fmin})")
        return KineticState(f, self.grid, state.time + dt, state.outflow + lost)

    def run(self, state: KineticState, n_steps: int, callback=None) -> KineticState:
        for _ in range(int(n_steps)):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


@functools.lru_cache(maxsize=16)
def _stepper(params: ModelParams, grid: PhaseGrid) -> Stepper:
    return Stepper(params, grid)


def step(state: KineticState, params: ModelParams, grid: Optional[PhaseGrid] = None) -> KineticState:
    """Advance ``state`` by one ``grid.dt``."""
    return _stepper(params, grid or state.grid).step(state)


def evolve(state: KineticState, params: ModelParams, t_end: float, callback=None) -> KineticState:
    """Step until ``state.time`` reaches ``t_end`` (to within half a step)."""
    st = _stepper(params, state.grid)
    n = int(round((t_end - state.time) / state.grid.dt))
    return st.run(state, max(n, 0), callback)


def jump_operator(state: KineticState, params: ModelParams):
    """``int lambda(v'.gradM) f dv' - lambda(v.gradM) f`` at every node."""
    return _stepper(params, state.grid).jump_rhs(state.f)


# ---------------------------------------------------------------------------
# norms

def weighted_norm(f, norm, grid: Optional[PhaseGrid] = None) -> float:
    """``sum weight |f| dx dv`` for a state or a raw (signed) array."""
    if isinstance(f, KineticState):
        grid = grid or f.grid
        f = f.f
    if grid is None:
        raise ConfigError("a grid is needed to weigh a raw array")
    w = norm.weight(grid)
    return float(np.sum(w * np.abs(f) * grid.wv) * grid.cell)


# ---------------------------------------------------------------------------
# steady state

@dataclass
class SteadyStateReport:
    iterations: int
    residual: float
    delta: float
    history: list
    leak_per_time: float


def steady_state(params: ModelParams, grid: PhaseGrid, tol: float = 1e-8,
                 max_iter: int = 200_000, delta: Optional[float] = None,
                 f0: Optional[KineticState] = None, stepper: Optional[Stepper] = None,
                 check_every: int = 10, return_report: bool = False):
    """Stationary density by time marching from the uniform density.

    The mass is renormalised after every step so that the slow leak through
    an outflow boundary does not drive the iterate to zero; the result is the
    normalised principal mode of the step operator. Convergence is declared
    when ``||f_{n+1} - f_n||_** / dt < tol`` with ``||.||_**`` weighted by
    ``exp(delta <x>)``. By default ``delta = beta gamma`` from the
    Foster-Lyapunov weights, which also validates the model hypotheses.
    """
    from .norms import StarStar

    if delta is None:
        from .harris import foster_lyapunov_weights
        w = foster_lyapunov_weights(params)
        delta = w.beta * w.gamma
    st = stepper or Stepper(params, grid)
    norm = StarStar(delta)
    wgt = norm.weight(grid) * grid.wv * grid.cell
    state = f0 if f0 is not None else uniform_state(grid)
    f = state.f / state.mass
    history = []
    leak = 0.0
    for it in range(1, max_iter + 1):
        nxt = st.step(KineticState(f, grid))
        m = nxt.mass
        leak = nxt.outflow / grid.dt
        g = nxt.f / m
        if it % check_every == 0 or it == 1:
            res = float(np.sum(wgt * np.abs(g - f))) / grid.dt
            history.append(res)
            if res < tol:
                out = KineticState(g, grid, 0.0, 0.0)
                rep = SteadyStateReport(it, res, delta, history, leak)
                return (out, rep) if return_report else out
            if not np.isfinite(res):
                raise NonConvergenceError("steady-state iteration produced non-finite values", history)
        f = g
    raise NonConvergenceError(f"steady state not reached in {max_iter} steps "
                              f"(last residual {history[-1]:.3e})", history)


# ---------------------------------------------------------------------------
# decay-rate fit

def convergence_rate(trajectory: Sequence, floor: Optional[float] = None):
    """Exponential decay rate of a distance trajectory.

    Least-squares fit of ``log(distance)`` against time over the samples with
    ``10 floor <= distance <= d0 / 2``. ``floor`` defaults to ``1e-12 d0``.

    Returns
    -------
    (sigma, r_squared)
    """
    arr = np.asarray(trajectory, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 10:
        raise ConfigError("need at least 10 (time, distance) samples")
    t, dist = arr[:, 0], arr[:, 1]
    if np.any(dist <= 0):
        raise ConfigError("distances must be positive")
    d0 = dist[0]
    if floor is None:
        floor = 1e-12 * d0
    sel = (dist >= 10 * floor) & (dist <= 0.5 * d0)
    if sel.sum() < 3:
        raise InsufficientDecayError("fewer than three samples inside the decay window")
    ts, ys = t[sel], np.log(dist[sel])
    slope, icpt = np.polyfit(ts, ys, 1)
    pred = slope * ts + icpt
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


# ---------------------------------------------------------------------------
# serialisation

_HEADER = struct.Struct("<qqqddd")


def save_state(state: KineticState, path) -> None:
    """Binary layout: int64 d, nx, nv; float64 L, V0, time; then f row-major."""
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.d, g.nx, g.nv, g.L, g.V0, state.time))
        fh.write(np.ascontiguousarray(state.f, dtype="<f8").tobytes())


def load_state(path, grid: Optional[PhaseGrid] = None):
    """Read a binary state. Returns a :class:`KineticState` when ``grid`` is
    given, otherwise ``(header_dict, f)``."""
    with open(path, "rb") as fh:
        d, nx, nv, L, V0, time = _HEADER.unpack(fh.read(_HEADER.size))
        f = np.frombuffer(fh.read(), dtype="<f8").reshape((nx,) * d + (nv,)).copy()
    header = dict(d=d, nx=nx, nv=nv, L=L, V0=V0, time=time)
    if grid is None:
        return header, f
    if (grid.d, grid.nx, grid.nv) != (d, nx, nv) or abs(grid.L - L) > 1e-12:
        raise ConfigError("stored state does not match the supplied grid")
    return KineticState(f, grid, time)


def state_to_csv(state: KineticState, path) -> None:
    """Columns ``x..., v..., f``; one row per phase-space node."""
    g = state.grid
    xs = g.points.reshape(-1, g.d)
    nxp = xs.shape[0]
    X = np.repeat(xs, g.nv, axis=0)
    V = np.tile(g.v, (nxp, 1))
    data = np.column_stack([X, V, state.f.reshape(-1)])
    names = [f"x{i + 1}" for i in range(g.d)] + [f"v{i + 1}" for i in range(g.d)] + ["f"]
    if g.d == 1:
        names = ["x", "v", "f"]
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
