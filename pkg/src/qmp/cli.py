"""Command-line front end: fit, sample, reg-fit, reg-sample, check.

Estimation and sampling are separate commands with an on-disk handoff
(fit.json / regfit.json plus CSVs), so posteriors can be re-drawn without
refitting.  Every command writes a manifest.json recording the resolved
configuration, seeds, the input-file digest and per-phase timings; the
deterministic part of the manifest is embedded in the fit artifacts.
All CSV output uses '.' decimals, LF line endings and 17 significant
digits, and every random quantity derives from --seed, so re-runs are
byte-identical regardless of --threads.

Exit codes: 0 success, 1 failed check, 2 input error, 3 degenerate data,
4 singular design.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import (
    check_density_norm,
    check_kernel_identity,
    check_kernel_ordering,
    check_martingale_kernel,
)
from .copulas import Schedule
from .errors import DegenerateDataError, FactorizationError, SingularDesignError
from .fit import FitConfig, FitResult, fit
from .grid import ProperQuantile, UniformGrid
from .regression import (
    CoefficientGrid,
    RegDataset,
    RegFitResult,
    RegSampleConfig,
    _destandardize_coeffs,
    conditional_quantile,
    reg_fit,
    reg_sample_approx,
    reg_sample_exact,
)
from .sample import PosteriorDraws, SampleConfig, sample_approx, sample_exact, summarize

_SCHEMA_VERSION = 1


class InputError(Exception):
    """Malformed input or missing artifacts; maps to exit code 2."""


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise InputError(f"missing artifact {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _digest(path: Path) -> str:
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _read_table(path: Path) -> tuple[list[str], list[list[float]]]:
    """Read a numeric CSV with a required header row.

    Errors name the offending row (1-based, excluding the header) and
    column so malformed files are diagnosable from stderr alone.
    """
    if not path.is_file():
        raise InputError(f"input file {path} does not exist")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, missing header") from None
        for cell in header:
            try:
                float(cell)
            except ValueError:
                continue
            raise InputError(f"{path}: missing header (first row is numeric)")
        rows = []
        for i, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise InputError(
                    f"{path}: row {i} has {len(raw)} fields, expected {len(header)}"
                )
            parsed = []
            for name, cell in zip(header, raw):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: row {i}, column {name!r}: could not parse {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, rows


def _resolve_threads(args) -> int:
    if args.threads is not None:
        threads = args.threads
    else:
        env = os.environ.get("QMP_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise InputError(f"QMP_THREADS={env!r} is not an integer") from None
    if threads < 1:
        raise InputError("thread count must be at least 1")
    return threads


def _manifest_core(command: str, config: dict, seeds: dict, input_digest: str | None) -> dict:
    return {
        "command": command,
        "config": config,
        "input_digest": input_digest,
        "schema_version": _SCHEMA_VERSION,
        "seeds": seeds,
        "version": __version__,
    }


def _write_manifest(outdir: Path, core: dict, timings: dict) -> None:
    _write_json(outdir / "manifest.json", {**core, "timings": timings})


def _parse_levels(spec: str) -> list[float]:
    try:
        levels = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"could not parse credible levels {spec!r}") from None
    if not levels or any(not 0.0 < lv < 1.0 for lv in levels):
        raise InputError("credible levels must lie strictly between 0 and 1")
    return sorted(levels)


def _summary_header(levels: list[float]) -> list[str]:
    header = ["u", "mean", "sd"]
    for lv in levels:
        header += [f"lower_{lv:g}", f"upper_{lv:g}"]
    return header


def _write_summary_csv(path: Path, pts, summary, levels) -> None:
    rows = []
    for j, u in enumerate(pts):
        row = [_fmt(u), _fmt(summary.mean[j]), _fmt(summary.sd[j])]
        for lv in levels:
            lo, hi = summary.bands[lv]
            row += [_fmt(lo[j]), _fmt(hi[j])]
        rows.append(row)
    _write_csv(path, _summary_header(levels), rows)


def _fit_config(args, seed: int) -> FitConfig:
    return FitConfig(
        grid_size=args.grid_size,
        n_permutations=args.permutations,
        c_grid_size=args.c_grid,
        permutation_seed=seed,
        learning_rate=args.learning_rate,
        bandwidth_c=args.bandwidth_c,
        bandwidth_k=args.bandwidth_k,
    )


def _fit_config_dict(args) -> dict:
    return {
        "grid_size": args.grid_size,
        "permutations": args.permutations,
        "c_grid": args.c_grid,
        "learning_rate": args.learning_rate,
        "bandwidth_c": args.bandwidth_c,
        "bandwidth_k": args.bandwidth_k,
    }


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    path = Path(args.input)
    header, rows = _read_table(path)
    if len(header) != 1:
        raise InputError(
            f"{path}: expected one numeric column, found {len(header)}: {header}"
        )
    y = np.array([r[0] for r in rows])
    t_read = time.perf_counter()

    result = fit(y, _fit_config(args, args.seed))
    t_fit = time.perf_counter()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    core = _manifest_core(
        "fit", _fit_config_dict(args), {"permutation_seed": args.seed}, _digest(path)
    )
    _write_json(outdir / "fit.json", {
        "grid_size": args.grid_size,
        "manifest": core,
        "n_obs": result.n_obs,
        "prequential_score": result.prequential_score,
        "schedule": {"a": result.schedule.a, "c": result.schedule.c, "k": result.schedule.k},
    })
    pts = result.grid.points
    vals = result.posterior_center.values
    _write_csv(outdir / "quantile.csv", ["u", "q"],
               ([_fmt(u), _fmt(q)] for u, q in zip(pts, vals)))
    _write_manifest(outdir, core, {
        "fit_seconds": t_fit - t_read,
        "read_seconds": t_read - t0,
        "write_seconds": time.perf_counter() - t_fit,
    })
    return 0


def _load_fit(fit_dir: Path) -> FitResult:
    meta = _read_json(fit_dir / "fit.json")
    qpath = fit_dir / "quantile.csv"
    if not qpath.is_file():
        raise InputError(f"missing artifact {qpath}")
    _, rows = _read_table(qpath)
    vals = np.array([r[1] for r in rows])
    grid = UniformGrid(meta["grid_size"])
    if vals.shape[0] != grid.size:
        raise InputError(
            f"{qpath}: {vals.shape[0]} rows do not match grid size {grid.size}"
        )
    sched = meta["schedule"]
    return FitResult(
        posterior_center=ProperQuantile(grid, vals),
        schedule=Schedule(a=sched["a"], c=sched["c"], k=sched["k"]),
        n_obs=meta["n_obs"],
        prequential_score=meta["prequential_score"],
    )


def _parse_functionals(spec: str) -> list[str]:
    names = [tok.strip() for tok in spec.split(",") if tok.strip()]
    for name in names:
        if name != "mean":
            raise InputError(f"unknown functional {name!r}; available: mean")
    return names


def cmd_sample(args) -> int:
    t0 = time.perf_counter()
    fit_dir = Path(args.fit_dir)
    result = _load_fit(fit_dir)
    levels = _parse_levels(args.levels)
    functionals = _parse_functionals(args.functionals)
    threads = _resolve_threads(args)
    horizon = result.n_obs + args.horizon_extra
    mode = "approximate" if args.approx else "exact"
    config = SampleConfig(n_samples=args.samples, horizon=horizon,
                          seed=args.seed, mode=mode)
    t_read = time.perf_counter()

    if args.approx:
        draws = sample_approx(result, config, threads=threads)
    else:
        draws = sample_exact(result, config, threads=threads)
    summary = summarize(draws, levels)
    t_sample = time.perf_counter()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    core = _manifest_core("sample", {
        "functionals": functionals,
        "horizon": horizon,
        "horizon_extra": args.horizon_extra,
        "levels": levels,
        "mode": mode,
        "samples": args.samples,
    }, {"sample_seed": args.seed}, _digest(fit_dir / "fit.json"))

    pts = result.grid.points
    _write_summary_csv(outdir / "summary.csv", pts, summary, levels)
    names = ["draw"] + functionals
    _write_csv(outdir / "functionals.csv", names,
               ([str(b)] + [_fmt(draws.functional_draws[f][b]) for f in functionals]
                for b in range(draws.n_samples)))
    if args.emit_draws:
        header = ["draw"] + [f"q{j + 1}" for j in range(result.grid.size)]
        _write_csv(outdir / "draws.csv", header,
                   ([str(b)] + [_fmt(v) for v in draws.draws[b]]
                    for b in range(draws.n_samples)))
    _write_manifest(outdir, core, {
        "read_seconds": t_read - t0,
        "sample_seconds": t_sample - t_read,
        "write_seconds": time.perf_counter() - t_sample,
    })
    return 0


def _split_response(header: list[str], rows: list[list[float]], response: str):
    if response not in header:
        raise InputError(f"response column {response!r} not found in {header}")
    ridx = header.index(response)
    data = np.asarray(rows)
    y = data[:, ridx]
    cov = np.delete(data, ridx, axis=1)
    names = [h for h in header if h != response]
    return y, (cov if names else None), names


def cmd_reg_fit(args) -> int:
    t0 = time.perf_counter()
    path = Path(args.input)
    header, rows = _read_table(path)
    y, cov, names = _split_response(header, rows, args.response)
    data = RegDataset.from_covariates(y, cov)
    t_read = time.perf_counter()

    result = reg_fit(data, _fit_config(args, args.seed))
    t_fit = time.perf_counter()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    config = dict(_fit_config_dict(args), response=args.response, covariates=names)
    core = _manifest_core("reg-fit", config, {"permutation_seed": args.seed}, _digest(path))
    _write_json(outdir / "regfit.json", {
        "coefficients_std": [[float(v) for v in row] for row in result.coefficients_std],
        "covariates": names,
        "grid_size": args.grid_size,
        "manifest": core,
        "n_features": data.n_features,
        "n_obs": result.n_obs,
        "prequential_score": result.prequential_score,
        "response": args.response,
        "schedule": {"a": result.schedule.a, "c": result.schedule.c, "k": result.schedule.k},
    })
    pts = result.grid.points
    coeffs = result.coefficients.coeffs
    header_out = ["u"] + [f"beta_{j}" for j in range(data.n_features)]
    _write_csv(outdir / "coeffs.csv", header_out,
               ([_fmt(pts[m])] + [_fmt(coeffs[j, m]) for j in range(data.n_features)]
                for m in range(pts.shape[0])))
    _write_manifest(outdir, core, {
        "fit_seconds": t_fit - t_read,
        "read_seconds": t_read - t0,
        "write_seconds": time.perf_counter() - t_fit,
    })
    return 0


def _load_reg_fit(meta: dict, data: RegDataset) -> RegFitResult:
    grid = UniformGrid(meta["grid_size"])
    coeffs_std = np.asarray(meta["coefficients_std"], dtype=float)
    if coeffs_std.shape != (data.n_features, grid.size):
        raise InputError(
            f"regfit.json coefficients of shape {coeffs_std.shape} do not match "
            f"{data.n_features} design columns on grid {grid.size}"
        )
    sched = meta["schedule"]
    coeffs = _destandardize_coeffs(coeffs_std, data)
    return RegFitResult(
        coefficients=CoefficientGrid(grid, coeffs),
        schedule=Schedule(a=sched["a"], c=sched["c"], k=sched["k"]),
        n_obs=meta["n_obs"],
        prequential_score=meta["prequential_score"],
        coefficients_std=coeffs_std,
    )


def _parse_at(tokens: list[str], n_cov: int) -> list[np.ndarray]:
    points = []
    for tok in tokens:
        try:
            vec = np.array([float(t) for t in tok.split(",") if t.strip()])
        except ValueError:
            raise InputError(f"could not parse --at vector {tok!r}") from None
        if vec.shape[0] != n_cov:
            raise InputError(
                f"--at vector {tok!r} has {vec.shape[0]} values, expected {n_cov} covariates"
            )
        points.append(vec)
    return points


def cmd_reg_sample(args) -> int:
    t0 = time.perf_counter()
    path = Path(args.input)
    fit_dir = Path(args.fit_dir)
    meta = _read_json(fit_dir / "regfit.json")
    if not path.is_file():
        raise InputError(f"input file {path} does not exist")
    digest = _digest(path)
    recorded = meta.get("manifest", {}).get("input_digest")
    if recorded != digest:
        raise InputError(
            f"{path} digest {digest} does not match the fitted input digest {recorded}"
        )
    header, rows = _read_table(path)
    y, cov, names = _split_response(header, rows, meta["response"])
    if names != meta["covariates"]:
        raise InputError(
            f"covariate columns {names} do not match the fitted ones {meta['covariates']}"
        )
    data = RegDataset.from_covariates(y, cov)
    result = _load_reg_fit(meta, data)
    levels = _parse_levels(args.levels)
    threads = _resolve_threads(args)
    horizon = result.n_obs + args.horizon_extra
    mode = "approximate" if args.approx else "exact"
    at_points = _parse_at(args.at or [], data.n_features - 1)
    config = RegSampleConfig(n_samples=args.samples, horizon=horizon,
                             seed=args.seed, mode=mode)
    t_read = time.perf_counter()

    if args.approx:
        draws = reg_sample_approx(result, data, config, threads=threads)
    else:
        draws = reg_sample_exact(result, data, config, threads=threads)
    t_sample = time.perf_counter()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    core = _manifest_core("reg-sample", {
        "at": [list(map(float, v)) for v in at_points],
        "horizon": horizon,
        "horizon_extra": args.horizon_extra,
        "levels": levels,
        "mode": mode,
        "samples": args.samples,
    }, {"sample_seed": args.seed}, digest)

    p = data.n_features
    bb = draws.beta_bar
    _write_csv(outdir / "beta_bar_draws.csv",
               ["draw"] + [f"beta_bar_{j}" for j in range(p)],
               ([str(b)] + [_fmt(bb[b, j]) for j in range(p)]
                for b in range(draws.n_samples)))

    pts = result.grid.points
    for idx, point in enumerate(at_points):
        xfull = np.concatenate([[1.0], point])
        vals = np.einsum("j,bjm->bm", xfull, draws.draws)
        vals.sort(axis=1)
        cond = PosteriorDraws(vals, result.grid,
                              conditional_quantile(result.coefficients, xfull))
        summary = summarize(cond, levels)
        name = "conditional_summary.csv" if idx == 0 else f"conditional_summary_{idx + 1}.csv"
        _write_summary_csv(outdir / name, pts, summary, levels)

    if args.emit_draws:
        header_out = ["draw", "coefficient"] + [f"q{j + 1}" for j in range(result.grid.size)]
        _write_csv(outdir / "beta_draws.csv", header_out,
                   ([str(b), f"beta_{j}"] + [_fmt(v) for v in draws.draws[b, j]]
                    for b in range(draws.n_samples) for j in range(p)))
    _write_manifest(outdir, core, {
        "read_seconds": t_read - t0,
        "sample_seconds": t_sample - t_read,
        "write_seconds": time.perf_counter() - t_sample,
    })
    return 0


def _parse_rhos(spec: str) -> list[float]:
    try:
        rhos = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"could not parse rho list {spec!r}") from None
    if not rhos or any(not 0.0 < r < 1.0 for r in rhos):
        raise InputError("rho values must lie strictly between 0 and 1")
    return rhos


def cmd_check(args) -> int:
    t0 = time.perf_counter()
    rhos = _parse_rhos(args.rho)
    density_rhos = _parse_rhos(args.density_rho)
    rng = np.random.default_rng(args.seed)
    pairs = [tuple(rng.uniform(0.02, 0.98, size=2)) for _ in range(25)]
    mesh = UniformGrid(20)

    tol = args.tolerance
    reports = [
        check_martingale_kernel(rhos, mesh, tolerance=tol if tol is not None else 1e-6),
        check_kernel_identity(rhos, pairs, tolerance=tol if tol is not None else 1e-5),
        check_density_norm(density_rhos, tolerance=tol if tol is not None else 1e-3),
        check_kernel_ordering([10, 100], Schedule(a=1.0, c=0.5, k=0.5), pairs,
                              tolerance=tol if tol is not None else 1e-10),
    ]
    passed = all(r.passed for r in reports)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    core = _manifest_core("check", {
        "density_rho": density_rhos,
        "rho": rhos,
        "tolerance": tol,
    }, {"pair_seed": args.seed}, None)
    _write_json(outdir / "checks.json", {
        "checks": [r.as_dict() for r in reports],
        "manifest": core,
        "passed": passed,
    })
    _write_manifest(outdir, core, {"check_seconds": time.perf_counter() - t0})
    return 0 if passed else 1


def _add_fit_flags(sub) -> None:
    sub.add_argument("--grid-size", type=int, default=200, help="uniform grid size n_U")
    sub.add_argument("--learning-rate", type=float, default=None,
                     help="override the data-driven learning rate a")
    sub.add_argument("--bandwidth-c", type=float, default=None,
                     help="fix the bandwidth constant c instead of tuning")
    sub.add_argument("--bandwidth-k", type=float, default=0.5,
                     help="bandwidth decay exponent")
    sub.add_argument("--permutations", type=int, default=10,
                     help="number of data orderings to average over")
    sub.add_argument("--c-grid", type=int, default=20,
                     help="number of candidate c values when tuning")
    sub.add_argument("--seed", type=int, required=True,
                     help="seed for the permutation streams")
    sub.add_argument("--out", default=".", help="output directory")


def _add_sample_flags(sub) -> None:
    sub.add_argument("--samples", type=int, default=5000, help="number of posterior draws")
    sub.add_argument("--horizon-extra", type=int, default=5000,
                     help="resampling steps beyond n")
    sub.add_argument("--approx", action="store_true",
                     help="use the GP approximation instead of exact resampling")
    sub.add_argument("--levels", default="0.95",
                     help="comma-separated credible levels")
    sub.add_argument("--seed", type=int, default=0, help="seed for the draw streams")
    sub.add_argument("--emit-draws", action="store_true",
                     help="also write the raw draw matrix")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: QMP_THREADS or 1)")
    sub.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmp",
        description="Quantile martingale posteriors: recursive quantile "
                    "estimation and posterior sampling without likelihoods.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_fit = subs.add_parser("fit", help="fit the quantile function to a numeric column")
    p_fit.add_argument("input", help="CSV with one numeric column (header required)")
    _add_fit_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sample = subs.add_parser("sample", help="draw from the posterior of a prior fit")
    p_sample.add_argument("--fit-dir", default=".", help="directory with fit.json/quantile.csv")
    p_sample.add_argument("--functionals", default="mean",
                          help="comma-separated functional names")
    _add_sample_flags(p_sample)
    p_sample.set_defaults(func=cmd_sample)

    p_rfit = subs.add_parser("reg-fit", help="fit linear quantile regression coefficients")
    p_rfit.add_argument("input", help="CSV with the response and covariate columns")
    p_rfit.add_argument("--response", required=True, help="name of the response column")
    _add_fit_flags(p_rfit)
    p_rfit.set_defaults(func=cmd_reg_fit)

    p_rsample = subs.add_parser("reg-sample", help="draw posterior coefficient functions")
    p_rsample.add_argument("input", help="the CSV used for reg-fit (digest-checked)")
    p_rsample.add_argument("--fit-dir", default=".", help="directory with regfit.json")
    p_rsample.add_argument("--at", action="append",
                           help="comma-separated covariate vector for conditional summaries; repeatable")
    _add_sample_flags(p_rsample)
    p_rsample.set_defaults(func=cmd_reg_sample)

    p_check = subs.add_parser("check", help="verify the copula and kernel identities")
    p_check.add_argument("--rho", default="0.3,0.7,0.99",
                         help="comma-separated correlations for the kernel checks")
    p_check.add_argument("--density-rho", default="0.3,0.5,0.8",
                         help="correlations for the squared-density check")
    p_check.add_argument("--tolerance", type=float, default=None,
                         help="override every check tolerance")
    p_check.add_argument("--seed", type=int, default=0, help="seed for the check design points")
    p_check.add_argument("--out", default=".", help="output directory")
    p_check.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateDataError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return 3
    except SingularDesignError as exc:
        print(f"error: singular design: {exc}", file=sys.stderr)
        return 4
    except FactorizationError as exc:
        print(f"error: factorization failed: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
