"""Grid, rearrangement, and functional tests.

The rearrangement properties (contraction, mean preservation,
equimeasurability, idempotence) are exercised as property tests over
randomly generated grid functions.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmp import (
    GridMismatchError,
    ProperQuantile,
    QuantileGrid,
    UniformGrid,
    evaluate,
    implicit_cdf,
    l2_distance,
    mean_functional,
    quantile_density,
    rearrange,
)
from tests.conftest import cubic_quantile

finite_floats = st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False)


def grid_values(size):
    return arrays(np.float64, size, elements=finite_floats)


class TestUniformGrid:
    def test_points(self):
        g = UniformGrid(4)
        np.testing.assert_allclose(g.points, [0.125, 0.375, 0.625, 0.875],
                                   atol=1e-15)
        np.testing.assert_allclose(g.spacing, 0.25, atol=1e-15)

    def test_points_are_cell_midpoints(self):
        g = UniformGrid(200)
        np.testing.assert_allclose(g.points[0], 1.0 / 400.0, atol=1e-15)
        np.testing.assert_allclose(g.points[-1], 1.0 - 1.0 / 400.0,
                                   atol=1e-15)
        assert g.points.size == 200

    def test_validation(self):
        with pytest.raises(ValueError):
            UniformGrid(1)
        with pytest.raises(ValueError):
            UniformGrid(0)

    def test_equality(self):
        assert UniformGrid(10) == UniformGrid(10)
        assert UniformGrid(10) != UniformGrid(11)


class TestRearrange:
    def test_sorts_values(self):
        g = UniformGrid(5)
        q = QuantileGrid(g, np.array([3.0, 1.0, 2.0, 5.0, 4.0]))
        pq = rearrange(q)
        np.testing.assert_array_equal(pq.values, [1.0, 2.0, 3.0, 4.0, 5.0])

    def test_already_monotone_unchanged(self):
        g = UniformGrid(6)
        vals = np.array([-2.0, -1.0, 0.0, 0.5, 1.5, 9.0])
        pq = rearrange(QuantileGrid(g, vals))
        np.testing.assert_array_equal(pq.values, vals)

    @given(grid_values(40))
    @settings(max_examples=200, deadline=None)
    def test_monotone_and_equimeasurable(self, vals):
        g = UniformGrid(40)
        pq = rearrange(QuantileGrid(g, vals))
        assert np.all(np.diff(pq.values) >= 0)
        np.testing.assert_array_equal(np.sort(vals), pq.values)

    @given(grid_values(40), grid_values(40))
    @settings(max_examples=200, deadline=None)
    def test_l2_contraction(self, a, b):
        """Rearrangement never increases the L2 distance of a pair."""
        g = UniformGrid(40)
        qa, qb = QuantileGrid(g, a), QuantileGrid(g, b)
        before = l2_distance(qa, qb)
        after = l2_distance(rearrange(qa), rearrange(qb))
        assert after <= before + 1e-12 * max(1.0, before)

    @given(grid_values(40))
    @settings(max_examples=100, deadline=None)
    def test_mean_preserved_exactly(self, vals):
        g = UniformGrid(40)
        q = QuantileGrid(g, vals)
        assert mean_functional(q) == mean_functional(rearrange(q))

    @given(grid_values(25))
    @settings(max_examples=100, deadline=None)
    def test_idempotent(self, vals):
        g = UniformGrid(25)
        pq = rearrange(QuantileGrid(g, vals))
        again = rearrange(QuantileGrid(g, pq.values.copy()))
        np.testing.assert_array_equal(pq.values, again.values)

    def test_rejects_non_finite(self):
        g = UniformGrid(3)
        with pytest.raises(ValueError):
            QuantileGrid(g, np.array([1.0, np.nan, 2.0]))
        with pytest.raises(ValueError):
            QuantileGrid(g, np.array([1.0, np.inf, 2.0]))


class TestImplicitCdf:
    def test_range(self):
        g = UniformGrid(10)
        pq = ProperQuantile(g, np.linspace(-1.0, 1.0, 10))
        lo = implicit_cdf(pq, -5.0)
        hi = implicit_cdf(pq, 5.0)
        np.testing.assert_allclose(lo, g.points[0], atol=1e-14)
        np.testing.assert_allclose(hi, g.points[-1], atol=1e-14)

    def test_monotone_in_y(self):
        g = UniformGrid(30)
        rng = np.random.default_rng(2)
        pq = rearrange(QuantileGrid(g, rng.normal(size=30)))
        ys = np.linspace(-4, 4, 200)
        vals = implicit_cdf(pq, ys)
        assert np.all(np.diff(vals) >= 0)

    def test_inverts_evaluate(self):
        g = UniformGrid(100)
        pq = ProperQuantile(g, cubic_quantile(g.points))
        for u in (0.1, 0.33, 0.5, 0.9):
            y = evaluate(pq, u)
            np.testing.assert_allclose(implicit_cdf(pq, y), u, atol=1e-9)


class TestEvaluate:
    def test_at_grid_points(self):
        g = UniformGrid(7)
        vals = np.linspace(0.0, 6.0, 7)
        pq = ProperQuantile(g, vals)
        np.testing.assert_allclose(evaluate(pq, g.points), vals, atol=1e-14)

    def test_interpolates_between(self):
        g = UniformGrid(3)  # points 1/6, 1/2, 5/6
        pq = ProperQuantile(g, np.array([0.0, 1.0, 3.0]))
        np.testing.assert_allclose(evaluate(pq, 1.0 / 3.0), 0.5, atol=1e-14)
        np.testing.assert_allclose(evaluate(pq, 2.0 / 3.0), 2.0, atol=1e-14)


class TestQuantileDensity:
    def test_identity_has_unit_density(self):
        g = UniformGrid(50)
        pq = ProperQuantile(g, g.points.copy())
        np.testing.assert_allclose(quantile_density(pq), 1.0, atol=1e-12)

    def test_positive(self):
        g = UniformGrid(60)
        rng = np.random.default_rng(8)
        pq = rearrange(QuantileGrid(g, rng.normal(size=60)))
        assert np.all(quantile_density(pq) > 0)

    def test_linear_ramp(self):
        g = UniformGrid(40)
        pq = ProperQuantile(g, 3.0 * g.points + 1.0)
        np.testing.assert_allclose(quantile_density(pq), 3.0, atol=1e-12)


class TestFunctionals:
    def test_l2_hand_value(self):
        g = UniformGrid(4)
        a = ProperQuantile(g, np.array([0.0, 0.0, 0.0, 0.0]))
        b = ProperQuantile(g, np.array([1.0, 1.0, 1.0, 1.0]))
        np.testing.assert_allclose(l2_distance(a, b), 1.0, atol=1e-15)

    def test_l2_grid_mismatch(self):
        a = ProperQuantile(UniformGrid(4), np.zeros(4))
        b = ProperQuantile(UniformGrid(5), np.zeros(5))
        with pytest.raises(GridMismatchError):
            l2_distance(a, b)

    def test_mean_of_identity(self):
        g = UniformGrid(200)
        pq = ProperQuantile(g, g.points.copy())
        np.testing.assert_allclose(mean_functional(pq), 0.5, atol=1e-14)

    def test_mean_of_cubic(self):
        """Antiderivative oracle: int (4(u-0.4)^3 + 0.2u) du = 0.204."""
        g = UniformGrid(200)
        pq = rearrange(QuantileGrid(g, cubic_quantile(g.points)))
        np.testing.assert_allclose(mean_functional(pq), 0.204, atol=1e-4)
