"""Weakly non-linear coupling ``S = S_inf (1 + eta N * rho)``.

The log-chemoattractant of a density ``rho`` is

    M = M_inf + log(1 + eta N * rho),

with ``N`` a compactly supported bump. Densities are discrete measures on the
spatial grid nodes, so ``M`` and its first two derivatives are exact finite
sums at any point. The fixed point of

    G(M) = M_inf + log(1 + eta N * rho^M),

where ``rho^M`` is the spatial marginal of the stationary state of the linear
equation driven by ``M``, is the stationary state of the non-linear equation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DivergenceError,
    HypothesisViolationError,
    NonConvergenceError,
    NormalizationError,
    ResourceError,
    UnsupportedResponseError,
)
from .grid import KineticState, PhaseGrid, Stepper, steady_state, weighted_norm
from .harris import (
    LyapunovWeights,
    ball_sup,
    certified_rate,
    foster_lyapunov_weights,
    lyapunov_phi,
)
from .model import ChemoProfile, ModelParams, make_params
from .norms import StarStar

__all__ = [
    "BumpKernel",
    "CouplingSpec",
    "PerturbedProfile",
    "FamilyEnvelope",
    "family_params",
    "family_weights",
    "eta_threshold",
    "eta_threshold_value",
    "G_map",
    "FixedPointTrace",
    "solve_fixed_point",
    "w1inf_distance",
    "perturbation_residual",
    "NonlinearConstants",
    "nonlinear_constants",
    "initial_data_bound",
    "nonlinear_evolve",
    "semigroup_difference",
]

_MAX_DENSE_BYTES = 2 * 1024 ** 3


# ---------------------------------------------------------------------------
# kernel

class BumpKernel:
    """``N(x) = c exp(-1 / (1 - |x/r|^2))`` for ``|x| < r``, zero outside."""

    def __init__(self, c: float = 1.0, r: float = 1.0, d: int = 1):
        if not (c > 0 and r > 0):
            raise ConfigError("bump kernel needs c > 0 and r > 0")
        self.c, self.r, self.d = float(c), float(r), int(d)
        u = np.linspace(0.0, 1.0, 200001)[:-1]
        f, f1, f2 = self._radial(u)
        self.sup = float(self.c * math.exp(-1.0))
        self.grad_sup = float(np.max(np.abs(f1)) / self.r)
        tang = np.abs(np.divide(f1, u, out=np.zeros_like(u), where=u > 0)) if d > 1 else 0.0
        self.hess_sup = float(np.max(np.maximum(np.abs(f2), tang)) / self.r ** 2)

    def _radial(self, u):
        # profile in u = |x|/r and its first two u-derivatives
        inside = u < 1
        w = np.where(inside, 1.0 - u * u, 1.0)
        f = np.where(inside, self.c * np.exp(-1.0 / w), 0.0)
        f1 = f * (-2.0 * u / w ** 2)
        f2 = f * ((4.0 * u * u) / w ** 4 - (2.0 + 6.0 * u * u) / w ** 3)
        return f, np.where(inside, f1, 0.0), np.where(inside, f2, 0.0)

    @property
    def w2inf(self) -> float:
        return max(self.sup, self.grad_sup, self.hess_sup)

    def eval(self, y):
        """Value, gradient and Hessian at displacements ``y`` of shape ``(..., d)``."""
        y = np.asarray(y, dtype=float)
        rr = np.sqrt(np.sum(y * y, axis=-1))
        u = rr / self.r
        f, f1, f2 = self._radial(u)
        safe = np.where(rr > 0, rr, 1.0)
        e = y / safe[..., None]
        g = (f1 / self.r)[..., None] * e
        d = y.shape[-1]
        ee = e[..., :, None] * e[..., None, :]
        tang = np.where(rr > 0, f1 / (self.r * safe), f2 / self.r ** 2)
        H = ((f2 / self.r ** 2)[..., None, None] * ee
             + tang[..., None, None] * (np.eye(d) - ee))
        return f, g, H

    def __call__(self, y):
        return self.eval(y)[0]


@dataclass(frozen=True)
class CouplingSpec:
    base: ChemoProfile
    kernel: BumpKernel
    eta: float

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.eta > 1.0 / self.kernel.sup:
            raise ConfigError(f"eta={self.eta} exceeds 1/sup N = {1.0 / self.kernel.sup}")
        if self.kernel.d != self.base.d:
            raise ConfigError("kernel and profile dimensions differ")

    def with_eta(self, eta: float) -> "CouplingSpec":
        return CouplingSpec(self.base, self.kernel, eta)


# ---------------------------------------------------------------------------
# perturbed profiles

class PerturbedProfile(ChemoProfile):
    """``M = M_inf + log(1 + eta sum_j m_j N(x - y_j))``.

    ``nodes`` has shape ``(n, d)`` and ``masses`` sums to one (or is all
    zero, giving ``M = M_inf``). Confinement and tail data are those of the
    whole family of such profiles, see :class:`FamilyEnvelope`.
    """

    def __init__(self, spec: CouplingSpec, nodes, masses, grid: Optional[PhaseGrid] = None):
        self.spec = spec
        self.d = spec.base.d
        self.nodes = np.asarray(nodes, dtype=float).reshape(-1, self.d)
        self.masses = np.asarray(masses, dtype=float).reshape(-1)
        keep = self.masses != 0
        self._y, self._m = self.nodes[keep], self.masses[keep]
        self._grid = grid
        env = FamilyEnvelope(spec)
        self.grad_sup, self.R, self.m_star = env.grad_sup, env.R, env.m_star
        self.tail = env.tail
        self.name = f"perturbed({spec.base.name}, eta={spec.eta:g})"

    @classmethod
    def from_rho(cls, spec: CouplingSpec, grid: PhaseGrid, rho) -> "PerturbedProfile":
        rho = np.asarray(rho, dtype=float).reshape(grid.spatial_shape)
        masses = (rho * grid.cell).reshape(-1)
        return cls(spec, grid.points.reshape(-1, grid.d), masses, grid)

    @classmethod
    def unperturbed(cls, spec: CouplingSpec, grid: PhaseGrid) -> "PerturbedProfile":
        return cls.from_rho(spec, grid, np.zeros(grid.spatial_shape))

    @property
    def rho(self):
        """Density on the grid the masses came from."""
        return (self.masses / self._grid.cell).reshape(self._grid.spatial_shape)

    def convolve(self, x):
        """``(N*rho, grad N*rho, Hess N*rho)`` at points ``x`` of shape ``(n, d)``."""
        n, d = x.shape[0], self.d
        v = np.zeros(n)
        g = np.zeros((n, d))
        H = np.zeros((n, d, d))
        if self._m.size == 0 or self.spec.eta == 0:
            return v, g, H
        chunk = max(1, int(4e6 // max(self._m.size * d * d, 1)))
        for lo in range(0, n, chunk):
            y = x[lo:lo + chunk, None, :] - self._y[None, :, :]
            fv, fg, fH = self.spec.kernel.eval(y)
            v[lo:lo + chunk] = fv @ self._m
            g[lo:lo + chunk] = np.einsum("pja,j->pa", fg, self._m)
            H[lo:lo + chunk] = np.einsum("pjab,j->pab", fH, self._m)
        return v, g, H

    def _flat(self, x):
        return x.reshape(-1, self.d), x.shape[:-1]

    def _value(self, x):
        flat, sh = self._flat(x)
        v, _, _ = self.convolve(flat)
        return (self.spec.base._value(flat) + np.log1p(self.spec.eta * v)).reshape(sh)

    def _grad(self, x):
        flat, sh = self._flat(x)
        v, g, _ = self.convolve(flat)
        eta = self.spec.eta
        out = self.spec.base._grad(flat) + eta * g / (1 + eta * v)[:, None]
        return out.reshape(sh + (self.d,))

    def _hess(self, x):
        flat, sh = self._flat(x)
        v, g, H = self.convolve(flat)
        eta = self.spec.eta
        den = (1 + eta * v)[:, None, None]
        corr = (eta * H * den - eta ** 2 * g[:, :, None] * g[:, None, :]) / den ** 2
        return (self.spec.base._hess(flat) + corr).reshape(sh + (self.d, self.d))

    def hess_norm(self, x):
        h = self.hess(x)
        if self.d == 1:
            return np.abs(h[..., 0, 0])
        return np.max(np.abs(np.linalg.eigvalsh(h)), axis=-1)


class _GridConvolution:
    """Dense kernel matrices between grid nodes, for fast per-step updates."""

    def __init__(self, kernel: BumpKernel, grid: PhaseGrid):
        pts = grid.points.reshape(-1, grid.d)
        n = pts.shape[0]
        need = n * n * (1 + grid.d) * 8
        if need > _MAX_DENSE_BYTES:
            raise ResourceError(f"grid convolution needs {need / 1e9:.1f} GB; "
                                f"reduce nx (currently {grid.nx})")
        fv, fg, _ = kernel.eval(pts[:, None, :] - pts[None, :, :])
        self.Kv = fv * grid.cell
        self.Kg = np.moveaxis(fg, -1, 0) * grid.cell
        self.grid = grid

    def grad(self, spec: CouplingSpec, rho):
        r = np.asarray(rho, dtype=float).reshape(-1)
        v = self.Kv @ r
        g = np.stack([K @ r for K in self.Kg], axis=-1)
        base = spec.base.grad(self.grid.points).reshape(-1, self.grid.d)
        out = base + spec.eta * g / (1 + spec.eta * v)[:, None]
        return out.reshape(self.grid.spatial_shape + (self.grid.d,))

    def value(self, spec: CouplingSpec, rho):
        r = np.asarray(rho, dtype=float).reshape(-1)
        base = spec.base.value(self.grid.points).reshape(-1)
        return (base + np.log1p(spec.eta * (self.Kv @ r))).reshape(self.grid.spatial_shape)


# ---------------------------------------------------------------------------
# uniform constants over the family

class FamilyEnvelope(ChemoProfile):
    """Bounds valid for every ``M_inf + log(1 + eta N * rho)``.

    * ``m_star = m_inf / 2`` (requires ``eta |grad N| <= m_inf / 2``),
      ``R = R_inf``;
    * ``grad_sup = grad_sup_inf + eta |grad N|``;
    * tail ``(C1, C2 + log(1 + eta |N|), alpha)``;
    * ``hess_norm`` is ``|Hess M_inf| + eta |Hess N| + eta^2 (|N| |Hess N| + |grad N|^2)``;
    * ``value`` is ``M_inf``, a lower bound for every member, so
      ``exp(-gamma value)`` bounds ``exp(-gamma M)`` from above.
    """

    def __init__(self, spec: CouplingSpec):
        b, k, eta = spec.base, spec.kernel, spec.eta
        self.spec = spec
        self.d = b.d
        if eta * k.grad_sup > 0.5 * b.m_star:
            raise HypothesisViolationError("eta |grad N| exceeds m_inf / 2: confinement lost")
        self.m_star = 0.5 * b.m_star if eta > 0 else b.m_star
        self.R = b.R
        self.grad_sup = b.grad_sup + eta * k.grad_sup
        self.hess_pert = eta * k.hess_sup + eta ** 2 * (k.sup * k.hess_sup + k.grad_sup ** 2)
        self.tail = None if b.tail is None else (b.tail[0], b.tail[1] + math.log1p(eta * k.sup),
                                                 b.tail[2])
        self.name = f"family({b.name}, eta={eta:g})"

    def _value(self, x):
        return self.spec.base._value(x)

    def _grad(self, x):
        return self.spec.base._grad(x)

    def _hess(self, x):
        return self.spec.base._hess(x)

    def hess_norm(self, x):
        return self.spec.base.hess_norm(x) + self.hess_pert


def family_params(spec: CouplingSpec, params: ModelParams) -> ModelParams:
    """Model constants valid uniformly over the perturbed family."""
    return make_params(params.d, params.chi, params.psi, FamilyEnvelope(spec))


def family_weights(spec: CouplingSpec, params: ModelParams) -> LyapunovWeights:
    return foster_lyapunov_weights(family_params(spec, params))


# ---------------------------------------------------------------------------
# eta threshold

def eta_threshold_value(lambda_tilde, chi, m_star, k, V0, psi_prime_sup, grad_N_sup,
                        N_sup=None, gamma=None) -> float:
    """``lambda_tilde chi (1-chi) m_star^k / (48 chi (1+chi) V0 |psi'| |grad N|)``,
    capped at ``1/|N|`` when ``N_sup`` is given. With ``gamma`` the bound is
    multiplied by ``gamma``, which is what keeps the perturbed moment rate
    positive."""
    if not math.isfinite(psi_prime_sup):
        raise UnsupportedResponseError("eta threshold needs a Lipschitz response")
    if not (psi_prime_sup > 0 and grad_N_sup > 0):
        raise ConfigError("need |psi'| > 0 and |grad N| > 0")
    th = (lambda_tilde * chi * (1 - chi) * m_star ** k
          / (48 * chi * (1 + chi) * V0 * psi_prime_sup * grad_N_sup))
    if gamma is not None:
        th *= gamma
    if N_sup is not None:
        th = min(th, 1.0 / N_sup)
    return th


def eta_threshold(params: ModelParams, kernel: BumpKernel, include_gamma: bool = False) -> float:
    """Threshold for a given model (its ``lambda_tilde``, ``k`` and ``m_star``)."""
    if not params.psi.smooth:
        raise UnsupportedResponseError("eta threshold needs a Lipschitz response, not sign")
    gamma = None
    if include_gamma:
        gamma = foster_lyapunov_weights(params).gamma
    return eta_threshold_value(params.lambda_tilde, params.chi, params.chemo.m_star, params.k,
                               params.V0, params.psi.deriv_bound, kernel.grad_sup,
                               kernel.sup, gamma)


# ---------------------------------------------------------------------------
# fixed-point map

def w1inf_distance(M1: ChemoProfile, M2: ChemoProfile, grid: PhaseGrid) -> float:
    """``max |M1 - M2|`` and ``max |grad M1 - grad M2|`` over the grid nodes."""
    X = grid.points
    dv = np.max(np.abs(M1.value(X) - M2.value(X)))
    dg = np.max(np.abs(M1.grad(X) - M2.grad(X)))
    return float(max(dv, dg))


def G_map(M: PerturbedProfile, spec: CouplingSpec, params: ModelParams, grid: PhaseGrid,
          tol: float = 1e-8, delta: Optional[float] = None, f0: Optional[KineticState] = None,
          mass_tol: float = 1e-10, **ss_kw):
    """One application of ``G``.

    Returns ``(G(M), f_inf^M)``.
    """
    if not isinstance(M, PerturbedProfile) or M.spec.base is not spec.base:
        raise ConfigError("G acts on profiles of the form M_inf + log(1 + eta N * rho)")
    if delta is None:
        delta = family_weights(spec, params).delta
    p = params.with_chemo(M)
    st = Stepper(p, grid)
    finf = steady_state(p, grid, tol=tol, delta=delta, f0=f0, stepper=st, **ss_kw)
    mass = finf.mass
    if abs(mass - 1.0) > mass_tol:
        raise NormalizationError(f"stationary density has mass {mass}")
    return PerturbedProfile.from_rho(spec, grid, finf.rho), finf


@dataclass
class FixedPointTrace:
    residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterates: list = field(default_factory=list, repr=False)
    converged: bool = False


def solve_fixed_point(spec: CouplingSpec, params: ModelParams, grid: PhaseGrid,
                      tol: float = 1e-6, max_iter: int = 30, ss_tol: float = 1e-8,
                      keep_iterates: bool = False, check_threshold: bool = True):
    """Iterate ``M_{n+1} = G(M_n)`` from ``M_0 = M_inf``.

    Returns ``(M_tilde, f_inf, trace)``. Three consecutive contraction ratios
    of one or more raise :class:`DivergenceError`.
    """
    if check_threshold and spec.eta > 0 and params.psi.smooth:
        th = eta_threshold(family_params(spec, params), spec.kernel)
        if spec.eta >= th:
            warnings.warn(f"eta={spec.eta:.3g} is not below the threshold {th:.3g}")
    delta = family_weights(spec, params).delta
    trace = FixedPointTrace()
    M = PerturbedProfile.unperturbed(spec, grid)
    f = None
    bad = 0
    for _ in range(max_iter):
        Mn, f = G_map(M, spec, params, grid, tol=ss_tol, delta=delta, f0=f)
        res = w1inf_distance(Mn, M, grid)
        if trace.residuals:
            prev = trace.residuals[-1]
            ratio = res / prev if prev > 0 else 0.0
            trace.ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
        trace.residuals.append(res)
        if keep_iterates:
            trace.iterates.append((Mn, res))
        M = Mn
        if res < tol:
            trace.converged = True
            return M, f, trace
        if bad >= 3:
            raise DivergenceError("fixed-point map is not contracting", trace.residuals)
    raise NonConvergenceError(f"no fixed point within {max_iter} iterations", trace.residuals)


# ---------------------------------------------------------------------------
# perturbation machinery

def _jump(f, lam, wv):
    return np.sum(lam * f * wv, axis=-1, keepdims=True) - lam * f


def _lam(params, grid, grad):
    return params.rate(np.asarray(grad).reshape(grid.spatial_shape + (grid.d,)) @ grid.v.T)


def perturbation_residual(f: KineticState, Mtilde: ChemoProfile, Mt: ChemoProfile,
                          params: ModelParams, f_inf: KineticState, spec: CouplingSpec,
                          delta: float, grad_tilde=None, grad_t=None):
    """``h = (L_Mtilde - L_Mt) f`` in ``||.||_**`` and the bound
    ``2 chi eta V0 |psi'| |grad N| ||f - f_inf||_** ||f||_**``.

    Transport terms cancel, so ``h`` is the difference of the jump parts.
    """
    grid = f.grid
    gt = Mtilde.grad(grid.points) if grad_tilde is None else grad_tilde
    gm = Mt.grad(grid.points) if grad_t is None else grad_t
    h = _jump(f.f, _lam(params, grid, gt), grid.wv) - _jump(f.f, _lam(params, grid, gm), grid.wv)
    norm = StarStar(delta)
    h_norm = weighted_norm(h, norm, grid)
    dist = weighted_norm(f.f - f_inf.f, norm, grid)
    fn = weighted_norm(f.f, norm, grid)
    psi_p = params.psi.deriv_bound if params.psi.smooth else math.inf
    bound = 2 * params.chi * spec.eta * params.V0 * psi_p * spec.kernel.grad_sup * dist * fn
    return h_norm, bound


@dataclass
class NonlinearConstants:
    """Constants of the non-linear argument for one coupling.

    ``B`` is the decay rate of the perturbed moment; when it is not positive
    the moment bound is vacuous and ``C_star`` is ``inf``.
    """

    eta: float
    eta_threshold: float
    eta_threshold_gamma: float
    gamma: float
    delta: float
    A: float
    Aprime: float
    B: float
    K1: float
    C_tilde: float
    C_star: float
    D: float
    sigma: float
    log_sigma: float

    def summary(self) -> dict:
        return dict(self.__dict__)


def nonlinear_constants(spec: CouplingSpec, params: ModelParams,
                        grid: Optional[PhaseGrid] = None) -> NonlinearConstants:
    """Uniform constants over the perturbed family.

    * ``C_tilde = 2 A' exp(gamma C2 + delta - gamma alpha)`` bounds
      ``||f_inf^M||_**`` for every member (requires ``delta <= gamma alpha``);
    * ``B = (2/3) (gamma lambda_tilde chi (1-chi) m_star^k / (4 (1+chi))
      - 4 eta chi V0 |psi'| |grad N|)`` and ``C_star = K1 A / B`` with
      ``K1 = 2 exp(gamma C2 + delta - gamma alpha)``;
    * ``D`` is the Harris constant ``C`` times the factors converting between
      ``||.||_*`` and ``||.||_**``; the second factor is finite only on a
      truncated grid and is evaluated on ``grid`` when given.
    """
    fp = family_params(spec, params)
    w = foster_lyapunov_weights(fp)
    env = fp.chemo
    if env.tail is None:
        raise HypothesisViolationError("base profile needs linear tail bounds")
    _, C2, a_tail = env.tail
    delta = w.delta
    if delta > w.gamma * a_tail:
        raise HypothesisViolationError("delta exceeds gamma alpha; norms are not comparable")
    A = w.gamma * w.C1 * w.V0 ** 2 * ball_sup(env, w.R_drift, w.gamma)
    Ap = A / w.decay_const
    K1 = 2.0 * math.exp(w.gamma * C2 + delta - w.gamma * a_tail)
    C_tilde = Ap * K1
    psi_p = params.psi.deriv_bound if params.psi.smooth else math.inf
    c4 = 1.5 * w.decay_const
    pert = 4 * spec.eta * params.chi * params.V0 * psi_p * spec.kernel.grad_sup
    B = (2.0 / 3.0) * (c4 - pert)
    C_star = K1 * A / B if B > 0 else math.inf
    cr = certified_rate(fp, w)
    K2 = math.inf
    if grid is not None:
        phi = lyapunov_phi(grid.points[..., None, :], grid.v, w, spec.base, params.psi)
        s = np.sqrt(1 + grid.radius ** 2)[..., None]
        K2 = float(np.max(phi / np.exp(delta * s)))
    D = cr.C * K1 * K2
    th = eta_threshold_value(fp.lambda_tilde, fp.chi, env.m_star, fp.k, fp.V0, psi_p,
                             spec.kernel.grad_sup, spec.kernel.sup) if params.psi.smooth else 0.0
    thg = eta_threshold_value(fp.lambda_tilde, fp.chi, env.m_star, fp.k, fp.V0, psi_p,
                              spec.kernel.grad_sup, spec.kernel.sup, w.gamma) \
        if params.psi.smooth else 0.0
    return NonlinearConstants(spec.eta, th, thg, w.gamma, delta, A, Ap, B, K1, C_tilde, C_star,
                              D, cr.sigma, cr.log_sigma)


def initial_data_bound(sigma, eta, chi, V0, D, Cstar, psiPrimeSup, gradNsup) -> float:
    """``(sigma^2 / (4 eta chi V0 D |psi'| |grad N|) - C*) / 4``.

    A nonpositive value means the admissibility condition is vacuous.
    """
    if eta == 0:
        return math.inf
    return 0.25 * (sigma ** 2 / (4 * eta * chi * V0 * D * psiPrimeSup * gradNsup) - Cstar)


@dataclass
class EvolveRecord:
    t: float
    distance: float
    norm: float
    h_norm: float
    h_bound: float


def nonlinear_evolve(f0: KineticState, spec: CouplingSpec, params: ModelParams, T: float,
                     f_inf: KineticState, Mtilde: Optional[ChemoProfile] = None,
                     delta: Optional[float] = None, record_every: int = 1):
    """Evolve the non-linear equation with the chemoattractant frozen over each step.

    At every step ``M_t = M_inf + log(1 + eta N * rho_t)`` is rebuilt from the
    current density and one linear step is taken. Returns a list of
    :class:`EvolveRecord` with ``||f_t - f_inf||_**``, ``||f_t||_**`` and the
    perturbation residual against ``Mtilde`` with its bound.
    """
    grid = f0.grid
    if delta is None:
        delta = family_weights(spec, params).delta
    conv = _GridConvolution(spec.kernel, grid)
    grad_tilde = (conv.grad(spec, f_inf.rho) if Mtilde is None
                  else Mtilde.grad(grid.points))
    norm = StarStar(delta)
    wts = norm.weight(grid) * grid.wv * grid.cell
    psi_p = params.psi.deriv_bound if params.psi.smooth else math.inf
    bound_c = 2 * params.chi * spec.eta * params.V0 * psi_p * spec.kernel.grad_sup
    lam_tilde = _lam(params, grid, grad_tilde)
    n = int(round(T / grid.dt))
    out = []
    state = f0
    for i in range(n + 1):
        grad_t = conv.grad(spec, state.rho)
        if i % record_every == 0 or i == n:
            lam_t = _lam(params, grid, grad_t)
            h = _jump(state.f, lam_tilde, grid.wv) - _jump(state.f, lam_t, grid.wv)
            dist = float(np.sum(wts * np.abs(state.f - f_inf.f)))
            fn = float(np.sum(wts * np.abs(state.f)))
            hn = float(np.sum(wts * np.abs(h)))
            out.append(EvolveRecord(state.time, dist, fn, hn,
                                    bound_c * dist * fn if spec.eta > 0 else 0.0))
        if i == n:
            break
        state = Stepper(params, grid, grad=grad_t).step(state)
    return out, state


def semigroup_difference(f0: KineticState, M1: ChemoProfile, M2: ChemoProfile,
                         params: ModelParams, T: float, delta: float):
    """``||(S^{M1}_T - S^{M2}_T) f0||_**`` and ``||grad M1 - grad M2||_inf`` on the grid."""
    grid = f0.grid
    s1 = Stepper(params.with_chemo(M1), grid)
    s2 = Stepper(params.with_chemo(M2), grid)
    n = int(round(T / grid.dt))
    a, b = s1.run(f0, n), s2.run(f0, n)
    diff = weighted_norm(a.f - b.f, StarStar(delta), grid)
    dg = float(np.max(np.abs(s1.grad - s2.grad)))
    return diff, dg
