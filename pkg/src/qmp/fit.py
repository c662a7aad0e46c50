"""Fitting the quantile estimate Q_n by recursive copula updates.

One pass over the data performs, for each observation y_i,

    V_i      = P_{i-1}(y_i)                      (implicit CDF of Q_{i-1})
    Q_i(u)   = Q_{i-1}(u) + alpha_i (u - H_{rho_i}(u, V_i))
    Q_i      <- increasing rearrangement of Q_i

and accumulates the prequential log score sum_i log p_{i-1}(y_i), which by
the inverse-function rule equals -sum_i log q_{i-1}(V_i) with q the
quantile density.  The fitted estimate is averaged over random data
permutations to remove order dependence, and the bandwidth constant c is
selected by maximizing the permutation-averaged score over a grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import _rng
from .copulas import Schedule
from .errors import DegenerateDataError
from .grid import DENSITY_FLOOR, ProperQuantile, UniformGrid

__all__ = [
    "FitConfig",
    "FitResult",
    "init_q0",
    "fit_once",
    "fit",
    "default_learning_rate",
    "tune_bandwidth_c",
]


@dataclass(frozen=True)
class FitConfig:
    """Configuration for :func:`fit`.

    ``learning_rate`` and ``bandwidth_c`` default to None, meaning
    "resolve from the data": the learning rate from the sample standard
    deviation and c by prequential tuning.  ``bandwidth_k`` stays at 0.5
    unless there is a reason to deviate.
    """

    grid_size: int = 200
    n_permutations: int = 10
    c_grid_size: int = 20
    permutation_seed: int = 0
    learning_rate: float | None = None
    bandwidth_c: float | None = None
    bandwidth_k: float = 0.5

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be at least 1")
        if self.c_grid_size < 2:
            raise ValueError("c_grid_size must be at least 2")
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.bandwidth_c is not None and not 0.0 < self.bandwidth_c < 1.0:
            raise ValueError("bandwidth_c must lie in (0, 1)")
        if not 0.0 < self.bandwidth_k < 1.0:
            raise ValueError("bandwidth_k must lie in (0, 1)")


@dataclass
class FitResult:
    """Output of :func:`fit`: the posterior center and resolved schedule."""

    posterior_center: ProperQuantile
    schedule: Schedule
    n_obs: int
    prequential_score: float
    per_observation_uniforms: np.ndarray | None = None

    @property
    def grid(self) -> UniformGrid:
        return self.posterior_center.grid


def _check_data(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"data must be a one-dimensional vector, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise ValueError(f"data contains a non-finite value at position {bad}")
    return y


def init_q0(y, grid: UniformGrid) -> ProperQuantile:
    """Initial estimate Q_0: the linear ramp from min(y) to max(y).

    This is the quantile function of the uniform distribution over the
    observed range, a deliberately flat starting point.
    """
    y = _check_data(y)
    if y.size == 0:
        raise ValueError("cannot initialize from an empty data vector")
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi == lo:
        raise DegenerateDataError("all observations are equal; the data has no spread")
    return ProperQuantile(grid, lo + (hi - lo) * grid.points)


def default_learning_rate(y) -> float:
    """Learning-rate constant a = sqrt(12) * sd(y) (sample sd, ddof 1).

    Calibrated so that the posterior variance of the mean functional
    matches the sampling variance of the sample mean in the large-n limit.
    """
    y = _check_data(y)
    if y.size < 2:
        raise ValueError("need at least 2 observations to set a learning rate")
    sd = float(np.std(y, ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("sample standard deviation is zero")
    return float(np.sqrt(12.0)) * sd


def _fit_loop(y, schedule: Schedule, grid: UniformGrid, q0_values: np.ndarray):
    """Single-pass recursive update; returns (sorted values, score, V trace).

    Works on raw arrays; the inner step recomputes the current quantile
    density for the prequential score before applying the update.
    """
    pts = grid.points
    z_grid = ndtri(pts)
    spacing = grid.spacing

    vals = q0_values.copy()
    n = y.shape[0]
    uniforms = np.empty(n)
    score = 0.0
    a, c, k = schedule.a, schedule.c, schedule.k

    for i in range(1, n + 1):
        yi = y[i - 1]
        v = float(np.interp(yi, vals, pts))
        v = min(max(v, pts[0]), pts[-1])
        uniforms[i - 1] = v

        dens = np.maximum(np.gradient(vals, spacing), DENSITY_FLOOR)
        score -= np.log(np.interp(v, pts, dens))

        alpha = a / (i + 1.0)
        rho = np.sqrt(1.0 - c * i ** (-k))
        sd = np.sqrt(1.0 - rho * rho)
        h = ndtr((z_grid - rho * ndtri(v)) / sd)
        vals = np.sort(vals + alpha * (pts - h), kind="stable")

    return vals, float(score), uniforms


def fit_once(y_ordered, schedule: Schedule, grid: UniformGrid,
             q0: ProperQuantile | None = None) -> tuple[ProperQuantile, float]:
    """One pass of the recursive update over ``y_ordered`` as given.

    Returns the rearranged estimate Q_n and the prequential log score
    sum_i log p_{i-1}(y_i).  ``q0`` defaults to :func:`init_q0` on the
    data; passing it explicitly is useful for controlled experiments.
    """
    y = _check_data(y_ordered)
    if q0 is None:
        q0 = init_q0(y, grid)
    elif q0.grid != grid:
        raise ValueError("q0 must live on the fit grid")
    vals, score, _ = _fit_loop(y, schedule, grid, q0.values)
    return ProperQuantile(grid, vals), score


def _permutations(n: int, count: int, seed: int) -> list[np.ndarray]:
    """Permutation 0 is the identity ordering; the rest are seeded shuffles."""
    perms = [np.arange(n)]
    for t in range(1, count):
        perms.append(_rng.stream(seed, t).permutation(n))
    return perms


def _averaged_fit(y, schedule: Schedule, grid: UniformGrid,
                  perms: list[np.ndarray]):
    """Permutation-averaged fit at a fixed schedule.

    Returns (averaged sorted values, mean score, V trace of the identity
    ordering).  The pointwise average of monotone functions is monotone;
    the caller still rearranges to guard against floating-point ties.
    """
    q0 = init_q0(y, grid)
    total = np.zeros(grid.size)
    scores = np.empty(len(perms))
    first_uniforms = None
    for t, perm in enumerate(perms):
        vals, score, uniforms = _fit_loop(y[perm], schedule, grid, q0.values)
        total += vals
        scores[t] = score
        if t == 0:
            first_uniforms = uniforms
    return total / len(perms), float(np.mean(scores)), first_uniforms


def tune_bandwidth_c(y, config: FitConfig) -> float:
    """Select c by maximizing the permutation-averaged prequential score.

    The candidate grid is c_m = m / (c_grid_size + 1) for m = 1..c_grid_size,
    which stays inside the open interval (0, 1).  Ties break toward the
    smaller c.
    """
    y = _check_data(y)
    a = config.learning_rate if config.learning_rate is not None else default_learning_rate(y)
    grid = UniformGrid(config.grid_size)
    perms = _permutations(y.shape[0], config.n_permutations, config.permutation_seed)
    c_grid = np.arange(1, config.c_grid_size + 1) / (config.c_grid_size + 1.0)
    scores = np.empty(c_grid.shape[0])
    for m, c in enumerate(c_grid):
        _, scores[m], _ = _averaged_fit(y, Schedule(a, float(c), config.bandwidth_k), grid, perms)
    return float(c_grid[int(np.argmax(scores))])


def fit(y, config: FitConfig = FitConfig()) -> FitResult:
    """Fit the posterior center Q_n with permutation averaging.

    Resolves the learning rate from the data unless the config supplies
    one, tunes c by :func:`tune_bandwidth_c` unless the config pins it,
    averages the per-permutation estimates pointwise and rearranges the
    average.  Deterministic given (data, config): the permutation streams
    derive from ``config.permutation_seed`` alone.
    """
    y = _check_data(y)
    if y.size < 2:
        raise ValueError("need at least 2 observations to fit")

    a = config.learning_rate if config.learning_rate is not None else default_learning_rate(y)
    if config.bandwidth_c is not None:
        c = config.bandwidth_c
    else:
        c = tune_bandwidth_c(
            y,
            FitConfig(
                grid_size=config.grid_size,
                n_permutations=config.n_permutations,
                c_grid_size=config.c_grid_size,
                permutation_seed=config.permutation_seed,
                learning_rate=a,
                bandwidth_k=config.bandwidth_k,
            ),
        )
    schedule = Schedule(a, c, config.bandwidth_k)

    grid = UniformGrid(config.grid_size)
    perms = _permutations(y.shape[0], config.n_permutations, config.permutation_seed)
    avg_vals, mean_score, uniforms = _averaged_fit(y, schedule, grid, perms)
    center = ProperQuantile(grid, np.sort(avg_vals, kind="stable"))
    return FitResult(
        posterior_center=center,
        schedule=schedule,
        n_obs=int(y.shape[0]),
        prequential_score=mean_score,
        per_observation_uniforms=uniforms,
    )
