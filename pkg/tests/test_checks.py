"""Tests for the built-in diagnostic checks."""

import numpy as np
import pytest

from qmp import (
    FitConfig,
    SampleConfig,
    Schedule,
    UniformGrid,
    check_density_norm,
    check_kernel_identity,
    check_kernel_ordering,
    check_martingale_kernel,
    convergence_trace,
    fit,
)


def random_pairs(count, seed=0):
    rng = np.random.default_rng(seed)
    return [tuple(rng.uniform(0.02, 0.98, size=2)) for _ in range(count)]


class TestMartingaleKernel:
    def test_passes_with_margin(self):
        report = check_martingale_kernel([0.3, 0.7, 0.99], UniformGrid(20))
        assert report.passed
        assert report.max_abs_error < 1e-8

    def test_tolerance_override(self):
        report = check_martingale_kernel([0.5], UniformGrid(10),
                                         tolerance=1e-30)
        assert not report.passed

    def test_detail_rows(self):
        report = check_martingale_kernel([0.5], UniformGrid(4))
        assert len(report.detail) == 4
        assert {"rho", "u", "abs_error"} <= set(report.detail[0])


class TestKernelIdentity:
    def test_passes(self):
        report = check_kernel_identity([0.3, 0.6, 0.9], random_pairs(25))
        assert report.passed
        assert report.max_abs_error < 1e-8

    def test_fails_with_absurd_tolerance(self):
        report = check_kernel_identity([0.5], random_pairs(3),
                                       tolerance=1e-30)
        assert not report.passed


class TestDensityNorm:
    def test_documented_values(self):
        """Relative error against 1/(1 - rho^2); equals 4/3 at rho 0.5."""
        report = check_density_norm([0.3, 0.5, 0.8])
        assert report.passed
        assert report.max_abs_error <= 1e-3
        by_rho = {row["rho"]: row for row in report.detail}
        np.testing.assert_allclose(by_rho[0.5]["quadrature"], 4.0 / 3.0,
                                   rtol=1e-3)
        np.testing.assert_allclose(by_rho[0.8]["target"],
                                   1.0 / (1.0 - 0.64), rtol=1e-12)


class TestKernelOrdering:
    def test_sandwich_holds(self):
        report = check_kernel_ordering([10, 100], Schedule(1.0, 0.5, 0.5),
                                       random_pairs(25))
        assert report.passed
        assert report.max_abs_error <= 1e-10

    def test_gap_shrinks_with_n(self):
        """The normalized kernel approaches the bridge bound as n grows."""
        pairs = random_pairs(10, seed=4)
        report = check_kernel_ordering([10, 100], Schedule(1.0, 0.5, 0.5),
                                       pairs)
        gaps = {}
        for row in report.detail:
            gaps.setdefault(row["n"], []).append(row["gap_to_upper"])
        for g10, g100 in zip(gaps[10], gaps[100]):
            assert g100 < g10

    def test_tail_interval_is_tight(self):
        report = check_kernel_ordering([10], Schedule(1.0, 0.5, 0.5),
                                       random_pairs(5))
        for row in report.detail:
            assert row["tail_halfwidth"] < 1e-8


class TestConvergenceTrace:
    def test_movement_decays(self):
        y = np.random.default_rng(6).gamma(2.0, size=80)
        res = fit(y, FitConfig(grid_size=21, n_permutations=2,
                               c_grid_size=4))
        rows = convergence_trace(res, SampleConfig(n_samples=1,
                                                   horizon=80 + 3000),
                                 stride=500)
        assert len(rows) == 6
        steps, moves = zip(*rows)
        assert steps[0] == 80 + 500
        assert moves[-1] < moves[0]

    def test_zero_steps(self):
        y = np.random.default_rng(6).gamma(2.0, size=30)
        res = fit(y, FitConfig(grid_size=11, n_permutations=2,
                               c_grid_size=4))
        assert convergence_trace(res, SampleConfig(horizon=30)) == []

    def test_mode_validation(self):
        y = np.random.default_rng(6).gamma(2.0, size=30)
        res = fit(y, FitConfig(grid_size=11, n_permutations=2,
                               c_grid_size=4))
        with pytest.raises(ValueError):
            convergence_trace(res, SampleConfig(mode="approximate"))


def test_report_serialization():
    report = check_martingale_kernel([0.5], UniformGrid(4))
    d = report.as_dict()
    assert isinstance(d["passed"], bool)
    assert isinstance(d["max_abs_error"], float)
    import json
    json.dumps(d)
