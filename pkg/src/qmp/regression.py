"""Linear quantile regression via the recursive copula update.

The model keeps one coefficient function per covariate, beta_j(u) on the
shared grid, and the conditional quantile at x is the increasing
rearrangement of sum_j beta_j(u) x_j.  The fit is the unconditional
recursion with the update term multiplied into the covariate vector:

    beta_i(u) = beta_{i-1}(u) + alpha_i (u - H_{rho_i}(u, V_i)) X_i,

a rank-one change per observation.  beta itself is never rearranged;
only conditional quantile evaluations are.

Estimation runs on standardized data (response and non-intercept
covariates centered and scaled) and coefficients are mapped back to the
original scale on output.  Posterior sampling continues the recursion
with covariates redrawn from a Bayesian-bootstrap weighted empirical
distribution, or takes the one-step GP shortcut with the separable
kernel Sigma_x(w) x gp_kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr, ndtri

from . import _rng
from .copulas import Schedule
from .errors import DegenerateDataError, FactorizationError, SingularDesignError
from .fit import FitConfig, _permutations
from .grid import DENSITY_FLOOR, ProperQuantile, UniformGrid
from .sample import _gp_kernel_matrix, _run_chunks, _schedule_arrays

__all__ = [
    "RegDataset",
    "CoefficientGrid",
    "RegSampleConfig",
    "RegFitResult",
    "RegPosteriorDraws",
    "reg_init",
    "conditional_quantile",
    "reg_fit",
    "reg_default_learning_rate",
    "reg_covariance",
    "bb_weights",
    "reg_sample_exact",
    "reg_sample_approx",
]


@dataclass(frozen=True)
class RegDataset:
    """Response and design matrix, with standardization bookkeeping.

    The first design column must be the all-ones intercept.  Non-intercept
    columns are centered and scaled by their sample sd, the response
    likewise; the stored means and scales invert the transform exactly.
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        if y.ndim != 1:
            raise ValueError(f"response must be 1-D, got shape {y.shape}")
        if x.ndim != 2:
            raise ValueError(f"design matrix must be 2-D, got shape {x.shape}")
        n, p = x.shape
        if y.shape[0] != n:
            raise ValueError(f"response length {y.shape[0]} does not match {n} design rows")
        if n < p + 1:
            raise ValueError(f"need at least p + 1 = {p + 1} observations, got {n}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise ValueError("data contains non-finite entries")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("first design column must be the all-ones intercept")
        sds = x[:, 1:].std(axis=0, ddof=1) if p > 1 else np.empty(0)
        if np.any(sds <= 0.0):
            bad = int(np.flatnonzero(sds <= 0.0)[0]) + 1
            raise ValueError(f"design column {bad} is constant")
        if y.std(ddof=1) <= 0.0:
            raise DegenerateDataError("response is constant; quantile scale is undefined")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_covariates(cls, y: np.ndarray, covariates: np.ndarray | None) -> "RegDataset":
        """Build a dataset by prepending the intercept column."""
        y = np.asarray(y, dtype=float)
        if covariates is None:
            x = np.ones((y.shape[0], 1))
        else:
            cov = np.asarray(covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.ndim != 2 or cov.shape[0] != y.shape[0]:
                raise ValueError(
                    f"covariates of shape {cov.shape} do not align with {y.shape[0]} responses"
                )
            x = np.column_stack([np.ones(y.shape[0]), cov])
        return cls(y, x)

    @property
    def n_obs(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @cached_property
    def x_mean(self) -> np.ndarray:
        m = self.x.mean(axis=0)
        m[0] = 0.0
        m.setflags(write=False)
        return m

    @cached_property
    def x_scale(self) -> np.ndarray:
        s = np.ones(self.n_features)
        if self.n_features > 1:
            s[1:] = self.x[:, 1:].std(axis=0, ddof=1)
        s.setflags(write=False)
        return s

    @cached_property
    def y_mean(self) -> float:
        return float(self.y.mean())

    @cached_property
    def y_scale(self) -> float:
        return float(self.y.std(ddof=1))

    @cached_property
    def x_std(self) -> np.ndarray:
        out = (self.x - self.x_mean) / self.x_scale
        out.setflags(write=False)
        return out

    @cached_property
    def y_std(self) -> np.ndarray:
        out = (self.y - self.y_mean) / self.y_scale
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class CoefficientGrid:
    """Coefficient functions beta_j(u_m), one row per design column."""

    grid: UniformGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=float))
        if coeffs.ndim != 2:
            raise ValueError(f"coefficients must be 2-D, got shape {coeffs.shape}")
        if coeffs.shape[1] != self.grid.size:
            raise ValueError(
                f"coefficient grid width {coeffs.shape[1]} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients contain non-finite entries")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_features(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class RegSampleConfig:
    """Configuration for regression posterior sampling.

    ``covariance_estimate`` optionally overrides the standardized design
    second-moment matrix (1/n) sum X_i X_i^T; None computes it from the
    dataset.  Only the flat Dirichlet weight protocol is implemented.
    """

    n_samples: int = 5000
    horizon: int | None = None
    seed: int = 0
    mode: str = "exact"
    covariance_estimate: np.ndarray | None = None
    dirichlet_flat: bool = True
    gp_jitter: float = 1e-10

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.mode not in ("exact", "approximate"):
            raise ValueError(f"mode must be 'exact' or 'approximate', got {self.mode!r}")
        if not self.dirichlet_flat:
            raise ValueError("only the flat Dirichlet weight protocol is supported")
        if self.gp_jitter < 0:
            raise ValueError("gp_jitter must be nonnegative")
        if self.covariance_estimate is not None:
            cov = np.asarray(self.covariance_estimate, dtype=float)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise ValueError("covariance_estimate must be a square matrix")
            try:
                np.linalg.cholesky((cov + cov.T) / 2.0)
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance_estimate is not positive definite") from exc
            object.__setattr__(self, "covariance_estimate", cov)


@dataclass
class RegFitResult:
    """Fitted coefficient functions plus what sampling needs to resume."""

    coefficients: CoefficientGrid
    schedule: Schedule
    n_obs: int
    prequential_score: float
    coefficients_std: np.ndarray

    @property
    def grid(self) -> UniformGrid:
        return self.coefficients.grid


@dataclass
class RegPosteriorDraws:
    """Posterior coefficient draws on both the original and fitted scales."""

    draws: np.ndarray
    draws_std: np.ndarray
    grid: UniformGrid
    center: CoefficientGrid
    increments: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.draws.shape[0]

    @cached_property
    def beta_bar(self) -> np.ndarray:
        """Per-draw averaged coefficients, integral of beta_j over u."""
        return self.draws.mean(axis=2)

    @cached_property
    def beta_bar_std(self) -> np.ndarray:
        return self.draws_std.mean(axis=2)


def _quartile_line(y: np.ndarray, pts: np.ndarray) -> np.ndarray:
    q25, q75 = np.quantile(y, [0.25, 0.75])
    if q75 <= q25:
        raise DegenerateDataError("lower and upper quartiles coincide")
    return q25 + 2.0 * (q75 - q25) * (pts - 0.25)


def reg_init(data: RegDataset, grid: UniformGrid | None = None) -> CoefficientGrid:
    """Starting coefficients: the quartile line for the intercept, zero slopes.

    The intercept function is the straight line through (0.25, q25(y)) and
    (0.75, q75(y)); every other coefficient starts identically zero.
    """
    if grid is None:
        grid = UniformGrid(FitConfig().grid_size)
    coeffs = np.zeros((data.n_features, grid.size))
    coeffs[0] = _quartile_line(data.y, grid.points)
    return CoefficientGrid(grid, coeffs)


def conditional_quantile(beta: CoefficientGrid, x: np.ndarray) -> ProperQuantile:
    """Rearranged grid values of sum_j beta_j(u) x_j at a covariate vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (beta.n_features,):
        raise ValueError(
            f"covariate vector of shape {x.shape} does not match {beta.n_features} coefficients"
        )
    vals = x @ beta.coeffs
    return ProperQuantile(beta.grid, np.sort(vals, kind="stable"))


def reg_covariance(data: RegDataset) -> np.ndarray:
    """Second-moment matrix (1/n) sum X_i X_i^T of the standardized design."""
    xs = data.x_std
    return xs.T @ xs / data.n_obs


def reg_default_learning_rate(data: RegDataset) -> float:
    """Learning rate sqrt(12) sigma / det(Sigma_x) on the standardized scale.

    sigma is the residual sd of an ordinary least-squares fit of the
    standardized response on the standardized design, solved through the
    normal equations; the determinant is that of the standardized
    second-moment matrix.
    """
    xs = data.x_std
    ys = data.y_std
    n, p = xs.shape
    gram = xs.T @ xs
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("design matrix is rank deficient") from exc
    diag = np.diagonal(chol)
    if np.any(diag <= np.sqrt(np.finfo(float).eps) * diag.max()):
        raise SingularDesignError("design matrix is numerically rank deficient")
    beta = np.linalg.solve(gram, xs.T @ ys)
    resid = ys - xs @ beta
    dof = max(n - p, 1)
    sigma = float(np.sqrt(resid @ resid / dof))
    if sigma <= 0.0:
        raise DegenerateDataError("residuals are identically zero")
    # det((1/n) X^T X) from the Gram factor, log-scaled to avoid overflow
    logdet = 2.0 * np.sum(np.log(diag)) - p * np.log(n)
    return float(np.sqrt(12.0) * sigma / np.exp(logdet))


def bb_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Flat Dirichlet weights via normalized unit-rate exponentials."""
    if n < 1:
        raise ValueError("need at least one weight")
    e = rng.standard_exponential(n)
    return e / e.sum()


def _reg_fit_loop(y_std, x_std, schedule, grid, init_coeffs):
    """One pass of the coefficient recursion; returns (coeffs, score).

    The score is the prequential log predictive density of the
    standardized response, sum_i log p_{i-1}(Y_i | X_i), with the
    conditional density read off the rearranged conditional quantile.
    """
    pts = grid.points
    spacing = grid.spacing
    z_grid = ndtri(pts)
    coeffs = init_coeffs.copy()
    score = 0.0
    for i in range(1, y_std.shape[0] + 1):
        xi = x_std[i - 1]
        vals = xi @ coeffs
        svals = np.sort(vals, kind="stable")
        v = float(np.interp(y_std[i - 1], svals, pts))
        v = min(max(v, pts[0]), pts[-1])
        dens = np.maximum(np.gradient(svals, spacing), DENSITY_FLOOR)
        score += float(np.log(np.interp(v, pts, dens)))
        rho = schedule.rho(i)
        arg = (z_grid - rho * ndtri(v)) / np.sqrt(1.0 - rho * rho)
        term = schedule.alpha(i) * (pts - ndtr(arg))
        coeffs += np.outer(xi, term)
    return coeffs, -score


def _averaged_reg_fit(y_std, x_std, schedule, grid, init_coeffs, perms):
    total = np.zeros_like(init_coeffs)
    scores = np.empty(len(perms))
    for t, perm in enumerate(perms):
        coeffs, score = _reg_fit_loop(y_std[perm], x_std[perm], schedule, grid, init_coeffs)
        total += coeffs
        scores[t] = score
    return total / len(perms), float(scores.mean())


def _destandardize_coeffs(coeffs_std: np.ndarray, data: RegDataset) -> np.ndarray:
    """Map standardized-space coefficients back to the original scale.

    Works on any (..., p, n_U) stack.  Slopes rescale by y_scale/x_scale;
    the intercept absorbs the response mean and the covariate centering.
    """
    out = coeffs_std * (data.y_scale / data.x_scale)[:, None]
    shift = data.y_mean
    if data.n_features > 1:
        shift = shift - np.einsum("...jm,j->...m", out[..., 1:, :], data.x_mean[1:])
    out[..., 0, :] += shift
    return out


def reg_fit(data: RegDataset, config: FitConfig) -> RegFitResult:
    """Fit the coefficient functions, averaging over data orderings.

    Runs the recursion on standardized data for each permutation (the
    first is always the given order), averages the resulting coefficient
    grids, and tunes the bandwidth constant c by the mean prequential
    score exactly as the unconditional fit does.  Coefficients and score
    are reported on the original response scale.
    """
    grid = UniformGrid(config.grid_size)
    y_std = data.y_std
    x_std = data.x_std
    n = data.n_obs

    a = config.learning_rate
    if a is None:
        a = reg_default_learning_rate(data)
    init_coeffs = np.zeros((data.n_features, grid.size))
    init_coeffs[0] = _quartile_line(y_std, grid.points)

    perms = _permutations(n, config.n_permutations, config.permutation_seed)

    c = config.bandwidth_c
    if c is None:
        candidates = np.arange(1, config.c_grid_size + 1) / (config.c_grid_size + 1)
        best_score = -np.inf
        c = candidates[0]
        for cand in candidates:
            schedule = Schedule(a=a, c=float(cand), k=config.bandwidth_k)
            _, score = _averaged_reg_fit(y_std, x_std, schedule, grid, init_coeffs, perms)
            if score > best_score:
                best_score = score
                c = float(cand)

    schedule = Schedule(a=a, c=float(c), k=config.bandwidth_k)
    coeffs_std, score_std = _averaged_reg_fit(y_std, x_std, schedule, grid, init_coeffs, perms)

    coeffs = _destandardize_coeffs(coeffs_std, data)
    # densities transform by 1/y_scale, so each log predictive drops by
    # log(y_scale) on the original response scale
    score = score_std - n * np.log(data.y_scale)
    return RegFitResult(
        coefficients=CoefficientGrid(grid, coeffs),
        schedule=schedule,
        n_obs=n,
        prequential_score=float(score),
        coefficients_std=coeffs_std,
    )


def _resolve_horizon(horizon: int | None, n_obs: int) -> int:
    out = horizon if horizon is not None else n_obs + 5000
    if out < n_obs:
        raise ValueError(f"horizon {out} is below the number of observations {n_obs}")
    return out


_STEP_BLOCK = 256


def _reg_exact_chunk(out, row0, beta_std, x_std, pts, zs, alphas, rho_sd, seed):
    """Fill a slice of standardized draws by continuing the recursion.

    Each row draws its bootstrap weights, its covariate path and its
    uniforms from one counter-based stream, so the result depends only on
    (seed, row index).  The rank-one updates collapse blockwise: with
    xa_t = alpha_t X_t, the accumulated change is
    (sum_t xa_t) u^T - sum_t xa_t H_t(u)^T, one normal-CDF pass and one
    batched matrix product per block.
    """
    rows = out.shape[0]
    steps = alphas.shape[0]
    n = x_std.shape[0]
    paths = np.empty((rows, steps), dtype=np.intp)
    unif = np.empty((rows, steps))
    for r in range(rows):
        rng = _rng.stream(seed, row0 + r)
        w = bb_weights(n, rng)
        paths[r] = rng.choice(n, size=steps, p=w)
        unif[r] = rng.random(steps)
    coef = ndtri(unif)
    coef *= rho_sd

    acc = np.zeros_like(out)
    n_u = pts.shape[0]
    block = np.empty((rows, _STEP_BLOCK, n_u))
    for b0 in range(0, steps, _STEP_BLOCK):
        b1 = min(b0 + _STEP_BLOCK, steps)
        buf = block[:, : b1 - b0]
        np.subtract(zs[b0:b1], coef[:, b0:b1, None], out=buf)
        ndtr(buf, out=buf)
        xa = x_std[paths[:, b0:b1]] * alphas[b0:b1, None]  # (rows, width, p)
        acc -= np.matmul(xa.transpose(0, 2, 1), buf)
        acc += xa.sum(axis=1)[:, :, None] * pts
    np.add(beta_std, acc, out=out)


def reg_sample_exact(fit: RegFitResult, data: RegDataset, config: RegSampleConfig,
                     threads: int = 1) -> RegPosteriorDraws:
    """Exact posterior draws of the coefficient functions.

    Per draw: bootstrap weights w over the observed covariate rows, a
    covariate path X_{n+1..N} i.i.d. from the w-weighted rows, uniforms
    V_i, and the rank-one recursion run to the horizon.  Coefficients are
    never rearranged.  Draws come back on both scales; the standardized
    ones are the recursion's native output.
    """
    if config.mode != "exact":
        raise ValueError("reg_sample_exact requires config.mode == 'exact'")
    n = fit.n_obs
    horizon = _resolve_horizon(config.horizon, n)
    grid = fit.grid
    p = data.n_features
    if fit.coefficients_std.shape[0] != p:
        raise ValueError("fit and dataset disagree on the number of design columns")

    draws_std = np.empty((config.n_samples, p, grid.size))
    if horizon == n or fit.schedule.a == 0.0:
        draws_std[:] = fit.coefficients_std
    else:
        alphas, rhos, inv_sd = _schedule_arrays(fit.schedule, n, horizon)
        pts = grid.points
        zs = ndtri(pts)[None, :] * inv_sd[:, None]
        rho_sd = rhos * inv_sd

        def worker(s, e):
            _reg_exact_chunk(draws_std[s:e], s, fit.coefficients_std, data.x_std,
                             pts, zs, alphas, rho_sd, config.seed)

        _run_chunks(config.n_samples, threads, worker, chunk_rows=64)

    draws = _destandardize_coeffs(draws_std, data)
    return RegPosteriorDraws(draws, draws_std, grid, fit.coefficients)


def reg_sample_approx(fit: RegFitResult, data: RegDataset, config: RegSampleConfig,
                      threads: int = 1, fixed_weights: np.ndarray | None = None,
                      return_increments: bool = False) -> RegPosteriorDraws:
    """GP shortcut for regression draws with the separable kernel.

    Per draw: weights w give the covariate factor Sigma_x(w) with
    Cholesky L_x; a p x n_U matrix of independent base GPs with the
    one-step kernel at rho_{n+1} gives the u factor; the increment is
    S = L_x Z and the draw is beta_n + (a / sqrt(n+1)) S.

    ``fixed_weights`` freezes w across draws (the covariate factor is
    then computed once), which conditions the draw covariance on w;
    ``return_increments`` exposes the S matrices for covariance checks.
    """
    if config.mode != "approximate":
        raise ValueError("reg_sample_approx requires config.mode == 'approximate'")
    n = fit.n_obs
    grid = fit.grid
    p = data.n_features
    if fit.coefficients_std.shape[0] != p:
        raise ValueError("fit and dataset disagree on the number of design columns")
    xs = data.x_std

    rho_next = float(fit.schedule.rho(n + 1))
    K = _gp_kernel_matrix(grid.points, rho_next)
    K[np.diag_indices_from(K)] += config.gp_jitter
    try:
        chol_u = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"base kernel is not positive definite with jitter {config.gp_jitter}"
        ) from exc
    scale = fit.schedule.a / np.sqrt(n + 1.0)

    chol_x_fixed = None
    if fixed_weights is not None:
        w = np.asarray(fixed_weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise ValueError("fixed_weights must be n nonnegative values")
        chol_x_fixed = _weighted_cov_factor(xs, w)

    draws_std = np.empty((config.n_samples, p, grid.size))
    increments = np.empty_like(draws_std) if return_increments else None

    def worker(s, e):
        for r in range(s, e):
            rng = _rng.stream(config.seed, r)
            if chol_x_fixed is None:
                chol_x = _weighted_cov_factor(xs, bb_weights(n, rng))
            else:
                chol_x = chol_x_fixed
            z = rng.standard_normal((p, grid.size))
            s_mat = chol_x @ (z @ chol_u.T)
            if increments is not None:
                increments[r] = s_mat
            draws_std[r] = fit.coefficients_std + scale * s_mat

    _run_chunks(config.n_samples, threads, worker)

    draws = _destandardize_coeffs(draws_std, data)
    return RegPosteriorDraws(draws, draws_std, grid, fit.coefficients,
                             increments=increments)


def _weighted_cov_factor(x_std: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Cholesky factor of Sigma_x(w) = sum_k w_k X_k X_k^T."""
    cov = (x_std * w[:, None]).T @ x_std
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("weighted covariate matrix is not positive definite") from exc
