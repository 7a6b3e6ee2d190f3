"""Weights of the total-variation type norms used to measure convergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PlainTV", "StarStar", "Star", "ExpWeight"]


@dataclass(frozen=True)
class PlainTV:
    """Unweighted L1 norm."""

    def weight(self, grid):
        return np.ones(grid.spatial_shape + (1,))


@dataclass(frozen=True)
class StarStar:
    """Weight ``exp(delta <x>)``."""

    delta: float

    def weight(self, grid):
        s = np.sqrt(1.0 + grid.radius ** 2)
        return np.exp(self.delta * s)[..., None]


@dataclass(frozen=True)
class ExpWeight:
    """Weight ``exp(-gamma M(x))``, equivalent to :class:`Star` up to a factor 3."""

    gamma: float
    chemo: object

    def weight(self, grid):
        return np.exp(-self.gamma * self.chemo.value(grid.points))[..., None]


@dataclass(frozen=True)
class Star:
    """Weight given by the Lyapunov function ``phi(x, v)``."""

    weights: object
    chemo: object
    psi: object

    def weight(self, grid):
        from .harris import lyapunov_phi

        return lyapunov_phi(grid.points[..., None, :], grid.v, self.weights, self.chemo, self.psi)
