"""Grid representation of quantile functions and increasing rearrangement.

Quantile estimates live on a fixed uniform grid of cell midpoints
``u_j = (j - 1/2) / n_U``; the endpoints 0 and 1 are deliberately excluded
because Phi^{-1} diverges there and every integral in the method runs over
the open interval.  On such a grid the increasing rearrangement

    Q^{+}(u) = inf{ y : u <= P(y) },   P(y) = integral of 1(Q(u) <= y) du

reduces to sorting the stored values, and the implicit CDF ``P`` becomes
linear interpolation of the sorted values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "UniformGrid",
    "QuantileGrid",
    "ProperQuantile",
    "rearrange",
    "implicit_cdf",
    "evaluate",
    "quantile_density",
    "l2_distance",
    "mean_functional",
]

#: Floor applied to finite-difference quantile densities.
DENSITY_FLOOR = 1e-10


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid of ``size`` cell midpoints on (0, 1)."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"grid size must be at least 2, got {self.size}")

    @cached_property
    def points(self) -> np.ndarray:
        pts = (np.arange(self.size, dtype=float) + 0.5) / self.size
        pts.flags.writeable = False
        return pts

    @property
    def spacing(self) -> float:
        return 1.0 / self.size


def _as_values(values, size_hint=None) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1:
        raise ValueError(f"grid values must be one-dimensional, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("grid values must all be finite")
    if size_hint is not None and vals.shape[0] != size_hint:
        raise ValueError(f"expected {size_hint} values, got {vals.shape[0]}")
    return vals


@dataclass
class QuantileGrid:
    """A (possibly non-monotone) quantile estimate Q on a uniform grid."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = _as_values(self.values, self.grid.size).copy()
        vals.flags.writeable = False
        self.values = vals


@dataclass
class ProperQuantile:
    """A monotone (rearranged) quantile function on a uniform grid."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = _as_values(self.values, self.grid.size).copy()
        if np.any(np.diff(vals) < 0.0):
            raise ValueError("ProperQuantile values must be non-decreasing")
        vals.flags.writeable = False
        self.values = vals


def rearrange(q: QuantileGrid | ProperQuantile) -> ProperQuantile:
    """Increasing rearrangement of a grid function: sort the values.

    Sorting preserves the multiset of values, so any separable statistic
    of them (mean, variance, order statistics) is unchanged, and the map
    is an L2 contraction between pairs of grid functions.
    """
    return ProperQuantile(q.grid, np.sort(q.values, kind="stable"))


def implicit_cdf(pq: ProperQuantile, y):
    """The CDF implied by a monotone quantile function, P(y) = Q^{-1}(y).

    Piecewise-linear inverse of the grid function: values below the
    smallest stored quantile map to ``1/(2 n_U)`` and above the largest to
    ``1 - 1/(2 n_U)``, so downstream Phi^{-1} always receives interior
    probabilities.  Non-decreasing in ``y``.
    """
    pts = pq.grid.points
    out = np.interp(y, pq.values, pts)
    return np.clip(out, pts[0], pts[-1])


def evaluate(pq: ProperQuantile, u):
    """Evaluate the quantile function by linear interpolation at ``u``.

    Constant extrapolation beyond the first/last grid midpoint.
    """
    return np.interp(u, pq.grid.points, pq.values)


def quantile_density(pq: ProperQuantile) -> np.ndarray:
    """Finite-difference derivative q(u_j) of the quantile function.

    Central differences on the interior, one-sided at the two endpoints,
    floored at 1e-10 so that log densities stay finite.
    """
    dens = np.gradient(pq.values, pq.grid.spacing)
    return np.maximum(dens, DENSITY_FLOOR)


def l2_distance(a: QuantileGrid | ProperQuantile, b: QuantileGrid | ProperQuantile) -> float:
    """L2 distance between two grid functions on the same grid.

    The square root of the Riemann-midpoint average of squared
    differences, i.e. the grid version of ||a - b||_2 on (0, 1).
    """
    if a.grid != b.grid:
        raise GridMismatchError(
            f"cannot compare functions on grids of size {a.grid.size} and {b.grid.size}"
        )
    diff = a.values - b.values
    return float(np.sqrt(np.mean(diff * diff)))


def mean_functional(q: QuantileGrid | ProperQuantile) -> float:
    """Riemann-midpoint average of the values: the mean of the implied law.

    Summed with :func:`math.fsum` so the result is a correctly rounded
    function of the value multiset; rearrangement then preserves it
    exactly, not just up to reassociation error.
    """
    return math.fsum(q.values) / q.values.size
