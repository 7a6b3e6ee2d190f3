"""Constructive constants of the drift/minorisation convergence argument.

Foster-Lyapunov weights and the Lyapunov function

    phi(x, v) = (1 - gamma z - beta gamma psi(z) z) exp(-gamma M(x)),
    z = v . grad M(x),

the drift inequality ``L* phi <= A - c phi``, the minorisation constant, and
the resulting Harris contraction constants. The certified rate is
astronomically small for realistic profiles, so the Harris arithmetic is
carried out with mpmath and logarithms are reported next to the floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import mpmath as mp
import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    HypothesisViolationError,
    InfeasibleRadiusError,
    QuadratureError,
)
from .model import ChemoProfile, ModelParams, RadialProfile, ResponseFunction

__all__ = [
    "LyapunovWeights",
    "foster_lyapunov_weights",
    "lyapunov_phi",
    "lstar_phi",
    "DriftCertificate",
    "verify_drift",
    "ball_sup",
    "moment_bound",
    "minorisation_bound",
    "MinorisationCertificate",
    "verify_minorisation",
    "verify_minorisation_particles",
    "HarrisRates",
    "harris_rate",
    "doeblin_decay_bound",
    "CertifiedRate",
    "certified_rate",
]

_DPS = 40


@dataclass(frozen=True)
class LyapunovWeights:
    """Parameters of the Lyapunov function and the drift constants.

    ``R`` and ``m_star`` come from the profile's confinement data;
    ``R_drift >= R`` is the radius beyond which the Hessian is also small
    enough for the drift inequality, and is the radius used by the drift
    certificate and the constant ``A``.
    """

    gamma: float
    beta: float
    xi_tail: float
    k: int
    C1: float
    R: float
    m_star: float
    lambda_tilde: float
    chi: float
    V0: float
    grad_sup: float
    bound1: float
    bound2: float
    sandwich_bound: float
    hess_limit: float
    R_drift: float

    @property
    def decay_const(self) -> float:
        """``c = gamma lambda_tilde chi (1-chi) m_star^k / (6 (1+chi))``."""
        return (self.gamma * self.lambda_tilde * self.chi * (1 - self.chi)
                * self.m_star ** self.k / (6 * (1 + self.chi)))

    @property
    def delta(self) -> float:
        """Exponent of the ``exp(delta <x>)`` weight paired with these weights."""
        return self.beta * self.gamma


def _xi_tail(k, m_star, grad_sup):
    if k < 2:
        return m_star ** (k - 2)
    if k == 2:
        return 1.0
    return grad_sup ** (k - 2)


def foster_lyapunov_weights(params: ModelParams, gamma: Optional[float] = None,
                            R_drift: Optional[float] = None) -> LyapunovWeights:
    """Largest admissible ``gamma`` and the accompanying constants.

    ``gamma`` is the minimum of the two drift bounds and of the bound that
    keeps ``phi`` within a factor 3/2 of ``exp(-gamma M)``. An explicit
    ``gamma`` is accepted if it does not exceed that minimum.
    """
    chem = params.chemo
    chi, lt, k, V0 = params.chi, params.lambda_tilde, params.k, params.V0
    m_star, gsup = chem.m_star, chem.grad_sup
    if not m_star > 0:
        raise HypothesisViolationError("confinement constant m_star must be positive")
    if not lt > 0:
        raise HypothesisViolationError("lambda_tilde must be positive")
    if not 0 < chi < 1:
        raise HypothesisViolationError("drift weights need 0 < chi < 1")
    if m_star > gsup * (1 + 1e-12):
        raise HypothesisViolationError("m_star exceeds sup |grad M|")
    beta = chi / (1 + chi)
    xi = _xi_tail(k, m_star, gsup)
    b1 = lt * chi * (1 - chi) * xi / (8 * (1 + chi))
    b2 = (1 + chi) / (2 * (2 + chi) * V0 * gsup)
    b3 = 1.0 / (2 * V0 * gsup * (1 + beta))
    gmax = min(b1, b2, b3)
    if gamma is None:
        gamma = gmax
    elif not 0 < gamma <= gmax * (1 + 1e-12):
        raise ConfigError(f"gamma={gamma} outside (0, {gmax}]")
    C1 = 1.0 + beta * params.psi.sup_zpsi_prime_plus_psi(V0 * gsup)
    hess_limit = lt * chi * (1 - chi) * m_star ** k / (4 * C1 * (1 + chi) * V0 ** 2)
    if R_drift is None:
        R_drift = chem.confinement_radius(hess_limit)
    return LyapunovWeights(gamma, beta, xi, k, C1, chem.R, m_star, lt, chi, V0, gsup,
                           b1, b2, b3, hess_limit, float(R_drift))


def lyapunov_phi(x, v, weights: LyapunovWeights, chemo: ChemoProfile,
                 psi: ResponseFunction):
    """``phi(x, v)``; ``x`` and ``v`` broadcast against each other on the
    leading axes, last axis of length ``d``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if chemo.d == 1:
        if x.ndim == 0 or x.shape[-1] != 1:
            x = x[..., None]
        if v.ndim == 0 or v.shape[-1] != 1:
            v = v[..., None]
    g = chemo.grad(x)
    z = np.sum(v * g, axis=-1)
    gam, beta = weights.gamma, weights.beta
    P = 1.0 - gam * z - beta * gam * psi(z) * z
    return P * np.exp(-gam * chemo.value(x))


def lstar_phi(grid, params: ModelParams, weights: LyapunovWeights):
    """``L* phi = v . grad_x phi + lambda(z) (int phi dv' - phi)`` at every
    grid node, with the transport part from the analytic chain rule and the
    velocity integral by the grid's velocity quadrature.

    Returns ``(Lphi, phi)``, both of shape ``grid.shape``.
    """
    chem, psi, rate = params.chemo, params.psi, params.rate
    X = grid.points
    g = chem.grad(X)
    H = chem.hess(X)
    e = np.exp(-weights.gamma * chem.value(X))[..., None]
    V = grid.v
    z = g @ V.T
    vHv = np.einsum("ja,...ab,jb->...j", V, H, V)
    gam, beta = weights.gamma, weights.beta
    P = 1.0 - gam * z - beta * gam * psi(z) * z
    dP = -gam - beta * gam * (psi.deriv(z) * z + psi(z))
    phi = P * e
    transport = (dP * vHv - gam * z * P) * e
    mean_phi = np.sum(phi * grid.wv, axis=-1, keepdims=True)
    jump = rate(z) * (mean_phi - phi)
    return transport + jump, phi


def _ball_points(chemo: ChemoProfile, R: float, n: int = 4001, n_dir: int = 16, seed: int = 0):
    radii = np.linspace(0.0, R, n)
    if isinstance(chemo, RadialProfile) or chemo.d == 1:
        dirs = np.eye(chemo.d)[:1] if isinstance(chemo, RadialProfile) else np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        dirs = [np.eye(chemo.d)[i] * s for i in range(chemo.d) for s in (1.0, -1.0)]
        extra = rng.standard_normal((n_dir, chemo.d))
        dirs = np.vstack([dirs, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, chemo.d)


def ball_sup(chemo: ChemoProfile, R: float, gamma: float) -> float:
    """``sup_{|x| <= R} |Hess M(x)| exp(-gamma M(x))`` on a fine mesh."""
    pts = _ball_points(chemo, R)
    return float(np.max(chemo.hess_norm(pts) * np.exp(-gamma * chemo.value(pts))))


@dataclass
class DriftCertificate:
    A: float
    Aprime: float
    decay_const: float
    worst_slack: float
    interior_max: float
    R_check: float
    passed: bool
    tol: float
    slack: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in
                ("A", "Aprime", "decay_const", "worst_slack", "interior_max", "R_check", "passed")}


def verify_drift(params: ModelParams, weights: LyapunovWeights, grid,
                 tol: float = 1e-8, R_check: Optional[float] = None) -> DriftCertificate:
    """Check ``L* phi + c phi <= tol`` outside ``R_check`` and ``L* phi <= A``
    inside, on every grid node.

    ``R_check`` defaults to ``weights.R_drift``.
    """
    if abs(np.sum(grid.wv) - 1.0) > 1e-10:
        raise QuadratureError("velocity quadrature weights do not sum to the ball volume")
    R = weights.R_drift if R_check is None else float(R_check)
    c = weights.decay_const
    A = weights.gamma * weights.C1 * weights.V0 ** 2 * ball_sup(params.chemo, R, weights.gamma)
    Aprime = A / c
    Lphi, phi = lstar_phi(grid, params, weights)
    slack = Lphi + c * phi
    outside = np.broadcast_to((grid.radius > R)[..., None], slack.shape)
    worst = float(slack[outside].max()) if outside.any() else -math.inf
    inside = ~outside
    imax = float(Lphi[inside].max()) if inside.any() else -math.inf
    passed = worst <= tol and imax <= A + tol
    return DriftCertificate(A, Aprime, c, worst, imax, R, passed, tol, slack)


def moment_bound(m0: float, Aprime: float, c: float, t):
    """``A' + exp(-c t) (m0 - A')``: bound on ``int phi f_t``."""
    return Aprime + np.exp(-c * np.asarray(t, dtype=float)) * (m0 - Aprime)


# ---------------------------------------------------------------------------
# minorisation

def minorisation_bound(chi: float, Rstar: float, V0: float, d: int):
    """``(T, alpha)`` with ``T = 3 + R*/V0`` and
    ``alpha = (1-chi)^2 exp(-(1+chi) T) / T^d``."""
    if Rstar < 0:
        raise ConfigError("R* must be nonnegative")
    T = 3.0 + Rstar / V0
    alpha = (1 - chi) ** 2 * math.exp(-(1 + chi) * T) / T ** d
    return T, alpha


def log_minorisation_bound(chi: float, Rstar: float, V0: float, d: int):
    """``(T, log alpha)``; usable when ``alpha`` underflows."""
    T = 3.0 + Rstar / V0
    return T, 2 * math.log1p(-chi) - (1 + chi) * T - d * math.log(T)


@dataclass
class MinorisationCertificate:
    T: float
    alpha_theory: float
    alpha_observed: float
    passed: bool
    per_start: list = field(default_factory=list)
    method: str = "grid"
    lower_confidence: Optional[float] = None


def minorisation_starts(d: int, Rstar: float, V0: float, n_random: int = 10, seed: int = 0):
    """Adversarial start: on the sphere ``|x0| = R*`` moving straight out;
    plus ``n_random`` uniform draws in the ball with uniform velocities."""
    from .particle import sample_uniform_ball

    rng = np.random.default_rng(seed)
    e = np.zeros(d)
    e[0] = 1.0
    starts = [(Rstar * e, V0 * e)]
    xs = sample_uniform_ball(d, Rstar, rng, n_random)
    vs = sample_uniform_ball(d, V0, rng, n_random)
    starts.extend(zip(xs, vs))
    return starts


def verify_minorisation(params: ModelParams, grid, T: float, alpha_theory: float,
                        starts=None, Rstar: float = 1.0, n_random: int = 10, seed: int = 0,
                        allowance: float = 0.9) -> MinorisationCertificate:
    """Run the grid solver from mollified Dirac data and compare the minimum
    density on ``{|x| <= V0} x {|v| <= V0}`` at time ``T`` with ``alpha``."""
    from .grid import Stepper, dirac_state

    if starts is None:
        starts = minorisation_starts(params.d, Rstar, params.V0, n_random, seed)
    st = Stepper(params, grid)
    n = int(round(T / grid.dt))
    inset = grid.radius <= params.V0 + 1e-12
    vin = np.linalg.norm(grid.v, axis=1) <= params.V0 + 1e-12
    per = []
    for x0, v0 in starts:
        s = st.run(dirac_state(grid, x0, v0), n)
        per.append(float(s.f[inset][:, vin].min()))
    obs = min(per)
    return MinorisationCertificate(T, alpha_theory, obs, obs >= allowance * alpha_theory, per)


def clopper_pearson_lower(k: int, n: int, confidence: float = 0.99) -> float:
    """One-sided lower confidence bound for a binomial proportion."""
    if k == 0:
        return 0.0
    return float(stats.beta.ppf(1 - confidence, k, n - k + 1))


def verify_minorisation_particles(params: ModelParams, T: float, alpha_theory: float,
                                  x0, v0, n_particles: int = 10 ** 6, seed: int = 0,
                                  confidence: float = 0.99) -> MinorisationCertificate:
    """Fraction of walkers started at ``(x0, v0)`` found in
    ``{|x| <= V0} x {|v| <= V0}`` at time ``T``; passes when its lower
    confidence bound exceeds ``alpha`` (the target set has unit phase volume)."""
    from .particle import ParticleEnsemble, advance

    ens = ParticleEnsemble.at_point(n_particles, x0, v0, seed=seed)
    ens = advance(ens, params, T)
    r = np.linalg.norm(ens.positions, axis=1)
    hit = int(np.count_nonzero(r <= params.V0))
    frac = hit / n_particles
    lo = clopper_pearson_lower(hit, n_particles, confidence)
    return MinorisationCertificate(T, alpha_theory, frac, lo >= alpha_theory,
                                   method="particles", lower_confidence=lo)


# ---------------------------------------------------------------------------
# Harris constants

@dataclass(frozen=True)
class HarrisRates:
    alpha: float
    lambdaFL: float
    K: float
    R: float
    T: float
    lambda0: float
    alpha0: float
    betaH: float
    alphaBar: float
    C: float
    sigma: float
    log_one_minus_alphaBar: float
    log_sigma: float

    def summary(self) -> dict:
        return dict(self.__dict__)


def _mpf(x):
    return x if isinstance(x, mp.mpf) else mp.mpf(float(x))


def harris_rate(alpha, lambdaFL, K, R, T, lambda0=None, alpha0=None) -> HarrisRates:
    """Contraction constants ``C = 1/alphaBar`` and ``sigma = -log(alphaBar)/T``.

    ``alpha`` may be an ``mpmath.mpf`` when it underflows double precision.
    Defaults: ``lambda0 = lambdaFL + 2K/R`` and ``alpha0 = alpha/2``.
    """
    with mp.workdps(_DPS):
        return _harris_rate(alpha, lambdaFL, K, R, T, lambda0, alpha0)


def _harris_rate(alpha, lambdaFL, K, R, T, lambda0, alpha0):
    a, lf, K_, R_, T_ = (_mpf(u) for u in (alpha, lambdaFL, K, R, T))
    if not 0 < a < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if not 0 < lf < 1 or K_ < 0 or T_ <= 0:
        raise ConfigError("need 0 < lambdaFL < 1, K >= 0, T > 0")
    if not R_ > 2 * K_ / (1 - a):
        raise InfeasibleRadiusError(f"R={float(R_):.6g} must exceed 2K/(1-alpha)="
                                    f"{float(2 * K_ / (1 - a)):.6g}")
    l0 = lf + 2 * K_ / R_ if lambda0 is None else _mpf(lambda0)
    a0 = a / 2 if alpha0 is None else _mpf(alpha0)
    if not (lf + 2 * K_ / R_) * (1 - mp.mpf(10) ** -30) <= l0 < 1:
        raise InfeasibleRadiusError(f"lambda0={float(l0)} outside [lambdaFL + 2K/R, 1)")
    if not 0 < a0 < a:
        raise ConfigError("alpha0 must lie in (0, alpha)")
    if K_ == 0:
        # limit betaH -> inf of the level-set branch
        one_minus = min(a + a0, 1 - l0)
        bH = mp.inf
    else:
        bH = a0 / K_
        one_minus = min(a + a0, R_ * bH * (1 - l0) / (2 + R_ * bH))
    abar = 1 - one_minus
    neg_log = -mp.log1p(-one_minus)
    sigma = neg_log / T_
    return HarrisRates(
        alpha=float(a), lambdaFL=float(lf), K=float(K_), R=float(R_), T=float(T_),
        lambda0=float(l0), alpha0=float(a0), betaH=float(bH), alphaBar=float(abar),
        C=float(1 / abar), sigma=float(sigma),
        log_one_minus_alphaBar=float(mp.log(one_minus)), log_sigma=float(mp.log(sigma)),
    )


def doeblin_decay_bound(alpha: float, n: int) -> float:
    """``(1 - alpha)^n``."""
    if not 0 < alpha < 1 or n < 0:
        raise ConfigError("need alpha in (0, 1) and n >= 0")
    return float(math.exp(n * math.log1p(-alpha)))


@dataclass
class CertifiedRate:
    """End-to-end chain from the drift and minorisation constants to a rate."""

    weights: LyapunovWeights
    A: float
    Aprime: float
    decay_const: float
    R_level: float
    R_star: float
    T: float
    log_alpha: float
    lambdaFL: float
    K: float
    rates: HarrisRates

    @property
    def sigma(self) -> float:
        return self.rates.sigma

    @property
    def log_sigma(self) -> float:
        return self.rates.log_sigma

    @property
    def C(self) -> float:
        return self.rates.C

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("weights", "rates")}
        out.update({f"harris_{k}": v for k, v in self.rates.summary().items()})
        return out


def certified_rate(params: ModelParams, weights: Optional[LyapunovWeights] = None,
                   level_factor: float = 4.0) -> CertifiedRate:
    """Harris constants for the linear equation.

    The continuous drift ``L* phi <= A - c phi`` gives, over a time ``T``,
    ``M_T* phi <= exp(-cT) phi + A'(1 - exp(-cT))``. The Lyapunov level is
    ``R_level = level_factor * A'`` (must exceed ``2A'`` for ``lambda0 < 1``).
    Because ``phi >= exp(-gamma M)/2`` and ``M <= C2 - alpha <x>``, the level
    set lies in ``<x> <= (C2 + log(2 R_level)/gamma) / alpha``, whose radius
    ``R*`` fixes the minorisation time ``T = 3 + R*/V0``.
    """
    if weights is None:
        weights = foster_lyapunov_weights(params)
    tail = params.chemo.tail
    if tail is None:
        raise HypothesisViolationError("profile has no linear tail bounds (C1, C2, alpha)")
    if not level_factor > 2:
        raise InfeasibleRadiusError("level_factor must exceed 2")
    _, C2, a_tail = tail
    c = weights.decay_const
    A = weights.gamma * weights.C1 * weights.V0 ** 2 * ball_sup(params.chemo, weights.R_drift,
                                                                weights.gamma)
    Ap = A / c
    R_level = level_factor * Ap
    bracket = (C2 + math.log(2 * R_level) / weights.gamma) / a_tail
    R_star = math.sqrt(max(bracket * bracket - 1.0, 0.0))
    T, log_alpha = log_minorisation_bound(params.chi, R_star, params.V0, params.d)
    lamFL = math.exp(-c * T)
    K = Ap * (-math.expm1(-c * T))
    rates = harris_rate(mp.exp(log_alpha), lamFL, K, R_level, T)
    return CertifiedRate(weights, A, Ap, c, R_level, R_star, T, log_alpha, lamFL, K, rates)
