"""Ingredients of the run-and-tumble equation.

Velocity space, response function, tumbling rate, chemoattractant profiles
with analytic derivative oracles, and the constant ``lambda_tilde`` of the
integral lower bound

    int_V psi(v . grad M) v . grad M dv  >=  lambda_tilde |grad M|^k.

Points are arrays whose last axis has length ``d``; for ``d == 1`` a bare
1-D array of coordinates is accepted as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import (
    ConfigError,
    HypothesisViolationError,
    InvalidDimensionError,
    ProfileError,
    QuadratureError,
)

__all__ = [
    "velocity_ball_radius",
    "ball_volume",
    "VelocitySpace",
    "ResponseFunction",
    "sign_response",
    "tanh_response",
    "TumblingRate",
    "tumbling_rate",
    "ChemoProfile",
    "RadialProfile",
    "smoothed_cone",
    "log_yukawa_like",
    "custom_profile",
    "chemo_profile",
    "ball_integral",
    "tilde_lambda",
    "ModelParams",
    "make_params",
    "hypothesis5_gap",
]


# ---------------------------------------------------------------------------
# velocity space

def ball_volume(d: int, r: float = 1.0) -> float:
    """Lebesgue volume of the radius-``r`` ball in dimension ``d``."""
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)) * r ** d


def velocity_ball_radius(d: int) -> float:
    """Radius ``V0`` of the centred ball of unit volume in dimension ``d``."""
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    return math.exp((gammaln(0.5 * d + 1.0) - 0.5 * d * math.log(math.pi)) / d)


@dataclass(frozen=True)
class VelocitySpace:
    d: int
    V0: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        V0 = velocity_ball_radius(self.d)
        if self.V0 is None:
            object.__setattr__(self, "V0", V0)
        elif abs(self.V0 - V0) > 1e-12 * V0:
            raise ConfigError(f"V0={self.V0} does not give a unit-volume ball in d={self.d}")

    @property
    def volume(self) -> float:
        return ball_volume(self.d, self.V0)


# ---------------------------------------------------------------------------
# response function and tumbling rate

@dataclass(frozen=True)
class ResponseFunction:
    """Bounded, odd, increasing response ``psi``.

    ``kind`` is ``"sign"`` (with ``sign(0) = 0``) or ``"tanh"`` for
    ``psi(m) = tanh(kappa m)``.
    """

    kind: str = "sign"
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sign", "tanh"):
            raise ConfigError(f"unknown response kind {self.kind!r}")
        if self.kind == "tanh" and not self.kappa > 0:
            raise ConfigError("tanh response needs kappa > 0")

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "sign":
            return np.sign(m)
        return np.tanh(self.kappa * m)

    def deriv(self, m):
        """Derivative; zero almost everywhere for the sign response."""
        m = np.asarray(m, dtype=float)
        if self.kind == "sign":
            return np.zeros_like(m)
        return self.kappa / np.cosh(self.kappa * m) ** 2

    @property
    def smooth(self) -> bool:
        return self.kind != "sign"

    lipschitz = smooth

    @property
    def deriv_bound(self) -> float:
        return self.kappa if self.smooth else math.inf

    @property
    def psi_prime_at_zero(self) -> Optional[float]:
        return self.kappa if self.smooth else None

    @property
    def k(self) -> int:
        """Exponent of ``|grad M|`` in the integral lower bound."""
        return 2 if self.smooth else 1

    def sup_zpsi_prime_plus_psi(self, zmax: float) -> float:
        """``sup_{|z| <= zmax} (psi'(z) z + psi(z))``."""
        if zmax <= 0:
            return 0.0
        if not self.smooth:
            return 1.0
        z = np.linspace(0.0, zmax, 20001)
        return float(np.max(self.deriv(z) * z + self(z)))


def sign_response() -> ResponseFunction:
    return ResponseFunction("sign")


def tanh_response(kappa: float = 1.0) -> ResponseFunction:
    return ResponseFunction("tanh", float(kappa))


@dataclass(frozen=True)
class TumblingRate:
    """``lambda(m) = 1 - chi psi(m)``."""

    chi: float
    psi: ResponseFunction

    def __post_init__(self):
        if not 0.0 <= self.chi < 1.0:
            raise ConfigError(f"chi must lie in [0, 1), got {self.chi}")

    def __call__(self, m):
        return 1.0 - self.chi * self.psi(m)

    @property
    def lower(self) -> float:
        return 1.0 - self.chi

    @property
    def upper(self) -> float:
        return 1.0 + self.chi


def tumbling_rate(m, rate: TumblingRate):
    return rate(m)


# ---------------------------------------------------------------------------
# chemoattractant profiles

def _points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ConfigError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return x


class ChemoProfile:
    """Log-chemoattractant ``M`` on R^d with analytic derivative oracles.

    Subclasses implement ``_value``, ``_grad`` and ``_hess`` on arrays of
    shape ``(..., d)``.

    Attributes
    ----------
    grad_sup : float
        ``sup |grad M|``.
    R, m_star : float
        ``|grad M(x)| >= m_star`` whenever ``|x| > R``.
    tail : tuple or None
        ``(C1, C2, alpha)`` with ``C1 - alpha<x> <= M <= C2 - alpha<x>``.
    """

    d: int
    grad_sup: float
    R: float
    m_star: float
    tail: Optional[tuple] = None
    name: str = "custom"

    def value(self, x):
        return self._value(_points(x, self.d))

    __call__ = value

    def grad(self, x):
        return self._grad(_points(x, self.d))

    def hess(self, x):
        return self._hess(_points(x, self.d))

    def grad_norm(self, x):
        return np.linalg.norm(self.grad(x), axis=-1)

    def hess_norm(self, x):
        """Spectral norm of the Hessian."""
        h = self.hess(x)
        return np.max(np.abs(np.linalg.eigvalsh(h)), axis=-1)

    def _radial_hess_sup(self, radii, n_dir=16, seed=0):
        # sup over sampled directions of |Hess| at each radius
        rng = np.random.default_rng(seed)
        dirs = [np.eye(self.d)[i] * s for i in range(self.d) for s in (1.0, -1.0)]
        if self.d > 1:
            extra = rng.standard_normal((n_dir, self.d))
            dirs.extend(extra / np.linalg.norm(extra, axis=1, keepdims=True))
        dirs = np.array(dirs)
        pts = radii[:, None, None] * dirs[None, :, :]
        return self.hess_norm(pts).max(axis=1)

    def confinement_radius(self, hess_limit: float, r_max: float = 1e5) -> float:
        """Smallest radius ``>= self.R`` beyond which ``|Hess M| <= hess_limit``."""
        radii = np.unique(np.concatenate([
            np.linspace(0.0, 20.0, 20001), np.geomspace(20.0, r_max, 4001)]))
        h = self._radial_hess_sup(radii)
        tail_max = np.maximum.accumulate(h[::-1])[::-1]
        ok = (tail_max <= hess_limit) & (radii >= self.R)
        if not ok.any():
            raise HypothesisViolationError(
                f"|Hess M| does not drop below {hess_limit:.3g} within |x| <= {r_max:g}")
        return float(radii[np.argmax(ok)])

    def hess_sup_ball(self, R: float) -> float:
        """``sup_{|x| <= R} |Hess M|`` on a fine radial mesh."""
        radii = np.linspace(0.0, R, 4001)
        return float(self._radial_hess_sup(radii).max())

    def check_confinement(self, x) -> bool:
        x = _points(x, self.d)
        r = np.linalg.norm(x, axis=-1)
        outside = r > self.R
        return bool(np.all(self.grad_norm(x[outside]) >= self.m_star - 1e-14))


class RadialProfile(ChemoProfile):
    """Profile of the form ``M(x) = g(<x>)`` with ``<x> = sqrt(1 + |x|^2)``."""

    def __init__(self, d, g, g1, g2, *, grad_sup, R, m_star, tail=None, name="radial"):
        if isinstance(d, bool) or int(d) != d or d < 1:
            raise InvalidDimensionError(f"bad dimension {d!r}")
        self.d = int(d)
        self._g, self._g1, self._g2 = g, g1, g2
        self.grad_sup = float(grad_sup)
        self.R = float(R)
        self.m_star = float(m_star)
        self.tail = tail
        self.name = name

    @staticmethod
    def _bracket(x):
        r2 = np.sum(x * x, axis=-1)
        return np.sqrt(1.0 + r2), r2

    def _value(self, x):
        s, _ = self._bracket(x)
        return self._g(s)

    def _grad(self, x):
        s, _ = self._bracket(x)
        return (self._g1(s) / s)[..., None] * x

    def _hess(self, x):
        s, _ = self._bracket(x)
        g1, g2 = self._g1(s), self._g2(s)
        eye = np.eye(self.d)
        xx = x[..., :, None] * x[..., None, :]
        return ((g1 / s)[..., None, None] * eye
                + ((g2 / s ** 2 - g1 / s ** 3)[..., None, None]) * xx)

    def hess_norm(self, x):
        x = _points(x, self.d)
        s, r2 = self._bracket(x)
        g1, g2 = self._g1(s), self._g2(s)
        radial = np.abs(g1 / s ** 3 + g2 * r2 / s ** 2)
        if self.d == 1:
            return radial
        return np.maximum(radial, np.abs(g1 / s))

    def _radial_hess_sup(self, radii, n_dir=16, seed=0):
        pts = np.zeros((radii.size, self.d))
        pts[:, 0] = radii
        return self.hess_norm(pts)


def smoothed_cone(C: float = 0.0, alpha: float = 1.0, d: int = 1) -> RadialProfile:
    """``M(x) = C - alpha <x>``; confinement ``R = 1``, ``m_star = alpha/sqrt(2)``."""
    if not alpha > 0:
        raise ProfileError("smoothed cone needs alpha > 0")
    C, alpha = float(C), float(alpha)
    return RadialProfile(
        d,
        lambda s: C - alpha * s,
        lambda s: -alpha * np.ones_like(s),
        lambda s: np.zeros_like(s),
        grad_sup=alpha, R=1.0, m_star=alpha / math.sqrt(2.0),
        tail=(C, C, alpha), name=f"smoothed_cone(C={C:g}, alpha={alpha:g})",
    )


def log_yukawa_like(alpha: float = 1.0, d: int = 1) -> RadialProfile:
    """Smooth profile with the tail of the log of a screened Poisson kernel.

    ``M(x) = -sqrt(alpha) <x> - (d-1)/2 log <x>``.
    """
    if not alpha > 0:
        raise ProfileError("log-Yukawa-like profile needs alpha > 0")
    a = math.sqrt(alpha)
    c = 0.5 * (d - 1)
    r = np.concatenate([np.linspace(0.0, 50.0, 50001), [1e6]])
    s = np.sqrt(1.0 + r * r)
    grad_sup = float(max(np.max((a + c / s) * r / s), a))
    tail = (0.0, 0.0, a) if d == 1 else None
    return RadialProfile(
        d,
        lambda s: -a * s - c * np.log(s),
        lambda s: -a - c / s,
        lambda s: c / s ** 2,
        grad_sup=grad_sup, R=1.0, m_star=a / math.sqrt(2.0),
        tail=tail, name=f"log_yukawa_like(alpha={alpha:g})",
    )


class _CustomProfile(ChemoProfile):
    def __init__(self, d, value, grad, hess, grad_sup, R, m_star, tail, name):
        self.d = int(d)
        self._fv, self._fg, self._fh = value, grad, hess
        self.grad_sup = float(grad_sup)
        self.R = float(R)
        self.m_star = float(m_star)
        self.tail = tail
        self.name = name

    def _value(self, x):
        return np.asarray(self._fv(x), dtype=float)

    def _grad(self, x):
        return np.asarray(self._fg(x), dtype=float)

    def _hess(self, x):
        return np.asarray(self._fh(x), dtype=float)


def _fd_consistency(profile: ChemoProfile, n=20, h=1e-4, seed=0):
    """Largest relative mismatch of grad/Hess oracles against central differences."""
    rng = np.random.default_rng(seed)
    d = profile.d
    x = rng.uniform(-3.0, 3.0, size=(n, d))
    g = profile.grad(x)
    H = profile.hess(x)
    worst = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dm = (profile.value(x + e) - profile.value(x - e)) / (2 * h)
        dg = (profile.grad(x + e) - profile.grad(x - e)) / (2 * h)
        worst = max(worst, np.max(np.abs(dm - g[:, i]) / (1.0 + np.abs(g[:, i]))))
        worst = max(worst, np.max(np.abs(dg - H[:, :, i]) / (1.0 + np.abs(H[:, :, i]))))
    return worst


def custom_profile(value: Callable, grad: Callable, hess: Callable, *, d: int,
                   grad_sup: float, R: float, m_star: float, tail=None,
                   name: str = "custom", check: bool = True, fd_tol: float = 1e-5):
    """Wrap user-supplied oracles.

    The oracles take arrays of shape ``(..., d)``. With ``check`` the gradient
    and Hessian are compared with central differences and a
    :class:`ProfileError` is raised on mismatch.
    """
    p = _CustomProfile(d, value, grad, hess, grad_sup, R, m_star, tail, name)
    if check:
        err = _fd_consistency(p)
        if not err < fd_tol:
            raise ProfileError(f"profile oracles inconsistent with finite differences "
                               f"(relative mismatch {err:.2e})")
    return p


def chemo_profile(kind: str, d: int = 1, **kw) -> ChemoProfile:
    """Build a profile by name: ``smoothed_cone``, ``log_yukawa_like`` or ``custom``."""
    if kind == "smoothed_cone":
        return smoothed_cone(kw.get("C", 0.0), kw.get("alpha", 1.0), d)
    if kind == "log_yukawa_like":
        return log_yukawa_like(kw.get("alpha", 1.0), d)
    if kind == "custom":
        return custom_profile(d=d, **kw)
    raise ConfigError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# integrals over the velocity ball

_GL_CACHE: dict = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _section_const(d):
    # volume of the (d-1)-dimensional unit ball
    return math.exp(0.5 * (d - 1) * math.log(math.pi) - gammaln(0.5 * (d - 1) + 1.0))


def ball_integral(h: Callable, V0: float, d: int, n: int = 64):
    """``int_{B(0,V0)} h(v . e) dv`` for a unit vector ``e``.

    Reduced to one dimension by rotation, with ``v1 = V0 sin(theta)`` so the
    section weight ``(V0^2 - v1^2)^((d-1)/2)`` becomes smooth; each half of
    ``[-pi/2, pi/2]`` gets its own Gauss-Legendre rule so that integrands with
    a jump at ``v1 = 0`` are handled exactly. ``h`` receives an array of
    shape ``(2n,)`` and may broadcast it against leading axes.
    """
    t, w = _gauss_legendre(n)
    theta = np.concatenate([(t - 1.0) * math.pi / 4, (t + 1.0) * math.pi / 4])
    wt = np.concatenate([w, w]) * math.pi / 4
    v1 = V0 * np.sin(theta)
    jac = _section_const(d) * V0 ** d * np.cos(theta) ** d
    return np.sum(h(v1) * (wt * jac), axis=-1)


def _phi_reduced(psi, g, V0, d, n):
    g = np.asarray(g, dtype=float)[..., None]
    return ball_integral(lambda v1: psi(v1 * g) * v1 * g, V0, d, n)


def tilde_lambda(vspace: VelocitySpace, psi: ResponseFunction, grad_sup: float,
                 m_star: float, n_mesh: int = 10_000, tol: float = 1e-10):
    """Constant and exponent ``(lambda_tilde, k)`` of the integral lower bound.

    Sign response: ``k = 1`` and ``lambda_tilde`` is the one-dimensional
    integral of ``|v1|`` against the ball section, computed adaptively.
    Smooth response: ``k = 2`` and ``lambda_tilde`` is the minimum of
    ``Phi(g)/g^2`` over a mesh of ``[m_star, grad_sup]``.
    """
    d, V0 = vspace.d, vspace.V0
    if not grad_sup > 0:
        raise HypothesisViolationError("grad_sup must be positive")
    if not psi.smooth:
        c = _section_const(d)
        val, err = integrate.quad(
            lambda v: abs(v) * max(V0 * V0 - v * v, 0.0) ** (0.5 * (d - 1)) * c,
            -V0, V0, points=[0.0], epsabs=1e-14, epsrel=1e-13, limit=200)
        if not err < tol:
            raise QuadratureError(f"lambda_tilde quadrature error estimate {err:.2e}")
        return float(val), 1
    if not 0 < m_star <= grad_sup:
        raise HypothesisViolationError(f"need 0 < m_star <= grad_sup, got {m_star}, {grad_sup}")
    g = np.linspace(m_star, grad_sup, n_mesh)
    phi = _phi_reduced(psi, g, V0, d, 64)
    phi2 = _phi_reduced(psi, g, V0, d, 128)
    if np.max(np.abs(phi - phi2)) > tol:
        raise QuadratureError("reduced integral not converged at 128 nodes")
    if np.any(phi2 <= 0):
        raise HypothesisViolationError("integral of psi(v.gradM) v.gradM is not positive")
    return float(np.min(phi2 / g ** 2)), 2


# ---------------------------------------------------------------------------
# full problem instance

@dataclass(frozen=True)
class ModelParams:
    vspace: VelocitySpace
    rate: TumblingRate
    chemo: ChemoProfile
    lambda_tilde: float
    k: int

    @property
    def d(self) -> int:
        return self.vspace.d

    @property
    def V0(self) -> float:
        return self.vspace.V0

    @property
    def chi(self) -> float:
        return self.rate.chi

    @property
    def psi(self) -> ResponseFunction:
        return self.rate.psi

    def with_chemo(self, chemo: ChemoProfile) -> "ModelParams":
        """Same constants, different profile (constants are not recomputed)."""
        return ModelParams(self.vspace, self.rate, chemo, self.lambda_tilde, self.k)

    def with_chi(self, chi: float) -> "ModelParams":
        return ModelParams(self.vspace, TumblingRate(chi, self.psi), self.chemo,
                           self.lambda_tilde, self.k)


def make_params(d: int, chi: float, psi: ResponseFunction, chemo: ChemoProfile,
                lambda_tilde: Optional[float] = None) -> ModelParams:
    if chemo.d != d:
        raise ConfigError(f"profile dimension {chemo.d} != model dimension {d}")
    vs = VelocitySpace(d)
    if lambda_tilde is None:
        lambda_tilde, k = tilde_lambda(vs, psi, chemo.grad_sup, chemo.m_star)
    else:
        k = psi.k
    return ModelParams(vs, TumblingRate(chi, psi), chemo, float(lambda_tilde), k)


def hypothesis5_gap(params: ModelParams, x):
    """``int psi(v.gradM) v.gradM dv - lambda_tilde |gradM|^k`` at points ``x``."""
    g = params.chemo.grad_norm(x)
    phi = _phi_reduced(params.psi, g, params.V0, params.d, 128)
    return phi - params.lambda_tilde * g ** params.k
