"""
Unit tests for weighted power variations along the crossing scheme.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.crossing_scheme import record_from_steps, simulate_coupled, simulate_walk
from src.gaussian_core import FbmGrid, SpanExceeded, generate_fbm
from src.variation_stats import (
    GridMismatch,
    VariationSeries,
    r_statistic,
    raw_increment_moment,
    relative_discrepancy,
    s_statistic,
    separation_identity_check,
    transform_identity_check,
    transform_side,
    v_statistic,
    v_statistic_separated,
    variation_series,
    w_statistic,
    w_statistic_at_index,
    z_along_walk,
)


@pytest.fixture
def small_pair():
    """Hand-built X on five points and the traced walk +1, +1, -1, +1 at level 2."""
    X = FbmGrid(0.5, 2, 1.0, [0.3, -0.1, 0.0, 0.5, 0.2])
    rec = record_from_steps(2, 1.0, [1, 1, -1, 1])
    return X, rec


def _pair(H, level, seed, span=8.0):
    rec = simulate_walk(level, 1.0, seed=seed)
    X = generate_fbm(H, level, span, seed=10_000 + seed)
    return X, rec


class TestHandComputed:
    """Statistics on a record small enough to follow by hand."""

    def test_z_along_walk(self, small_pair):
        """Z at the hitting times is X at the walk positions."""
        X, rec = small_pair
        np.testing.assert_allclose(z_along_walk(X, rec), [0.0, 0.5, 0.2, 0.5, 0.2])

    def test_first_power_telescopes(self, small_pair):
        """V^{(1)}(1) = 2^{nH/2} Z_end."""
        X, rec = small_pair
        assert v_statistic(X, rec, "one", 1) == pytest.approx(math.sqrt(2.0) * 0.2, abs=1e-15)

    def test_quadratic(self, small_pair):
        """V^{(2)}(1) = Σ(2ΔZ² - 1) = -2.96 and the cell sum agrees."""
        X, rec = small_pair
        assert v_statistic(X, rec, "one", 2) == pytest.approx(-2.96, abs=1e-12)
        assert v_statistic_separated(X, rec, "one", 2) == pytest.approx(-2.96, abs=1e-12)

    def test_w_statistic(self, small_pair):
        """W^{(1)}(1, t) telescopes to 2^{nH/2} X^±."""
        X, _ = small_pair
        assert w_statistic(X, "one", 1, 1.0) == pytest.approx(math.sqrt(2.0) * 0.2)
        assert w_statistic(X, "one", 1, -1.0) == pytest.approx(math.sqrt(2.0) * 0.3)
        assert w_statistic(X, "one", 1, 0.0) == 0.0
        assert w_statistic(X, "one", 1, 0.4) == 0.0

    def test_grid_mismatch(self, small_pair):
        """Levels of X and the record must agree."""
        _, rec = small_pair
        X = generate_fbm(0.5, 4, 2.0, seed=0)
        with pytest.raises(GridMismatch):
            v_statistic(X, rec, "one", 2)
        with pytest.raises(ValueError):
            transform_side(X, rec, "one", 1)

    def test_span_exceeded(self):
        """A walk leaving the simulated span raises SpanExceeded."""
        rec = record_from_steps(2, 1.0, [1, 1, 1, 1])
        X = FbmGrid(0.5, 2, 1.0, [0.3, -0.1, 0.0, 0.5, 0.2])
        with pytest.raises(SpanExceeded):
            v_statistic(X, rec, "one", 2)

    def test_relative_discrepancy(self):
        """|l - r| / (1 + |l|)."""
        assert relative_discrepancy(1.0, 1.0) == 0.0
        assert relative_discrepancy(3.0, 1.0) == pytest.approx(0.5)


class TestIdentities:
    """Exact algebraic identities at relative 1e-9."""

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("weight", ["one", "cos", "rational"])
    def test_separation(self, H, weight):
        """Summing over steps equals summing over cells with U + (-1)^q D."""
        for seed in range(3):
            X, rec = _pair(H, 8, seed)
            for q in range(1, 7):
                assert separation_identity_check(X, rec, weight, q) <= 1e-9, f"seed {seed}, q={q}"

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("weight", ["one", "cos", "rational"])
    def test_transform(self, H, weight):
        """V^{(2r-1)} = Σ_i κ_{r,i} W^{(2i-1)}(Y_end)."""
        for seed in range(3):
            X, rec = _pair(H, 8, seed)
            for r in range(1, 4):
                assert transform_identity_check(X, rec, weight, r) <= 1e-9, f"seed {seed}, r={r}"

    def test_first_power_is_endpoint(self):
        """For f=1 the first variation is the scaled endpoint."""
        X, rec = _pair(0.3, 10, 5)
        scale = 2.0 ** (10 * 0.3 / 2)
        assert v_statistic(X, rec, "one", 1) == pytest.approx(scale * X.values_at(rec.j_star), rel=1e-9, abs=1e-9)


class TestNormalizations:
    """Normalized and raw statistics."""

    def test_s_statistic(self):
        """S = 2^{-nκ} V."""
        X, rec = _pair(0.4, 8, 1)
        assert s_statistic(X, rec, "cos", 2, 0.25) == pytest.approx(2.0 ** -2 * v_statistic(X, rec, "cos", 2))
        assert s_statistic(X, rec, "cos", 2, 0.0) == v_statistic(X, rec, "cos", 2)

    def test_raw_moment_brownian(self):
        """At H=1/2, E[ΔZ²] = 2^{-n/2} sqrt(2/π)."""
        assert raw_increment_moment(0.5, 4, 2) == pytest.approx(0.25 * math.sqrt(2 / math.pi))
        assert raw_increment_moment(0.3, 4, 3) == 0.0

    @pytest.mark.parametrize("H, p", [(0.3, 2), (0.7, 4)])
    def test_raw_moment_monte_carlo(self, H, p):
        """Closed form against increments drawn as N(0, |ΔY|^{2H}), ΔY ~ N(0, 2^{-n})."""
        level = 6
        rng = np.random.default_rng(3)
        dy = rng.standard_normal(400_000) * 2.0 ** (-level / 2)
        dz = rng.standard_normal(dy.size) * np.abs(dy) ** H
        samples = dz ** p
        se = samples.std() / math.sqrt(samples.size)
        assert abs(samples.mean() - raw_increment_moment(H, level, p)) < 5 * se

    def test_r_statistic_needs_coupled(self):
        """The time-grid statistic reads Y from the fine path."""
        X, rec = _pair(0.4, 4, 0)
        with pytest.raises(ValueError):
            r_statistic(X, rec, "one", 2)

    def test_r_statistic_coupled(self):
        """On a coupled record the raw statistic is finite."""
        rec = simulate_coupled(4, 1.0, fine_level=10, seed=2)
        X = generate_fbm(0.4, 4, 8.0, seed=7)
        value = r_statistic(X, rec, "cos", 2, 0.5)
        assert np.isfinite(value)


class TestSeries:
    """One realization across levels."""

    def test_variation_series_coarsens(self):
        """Values at each level use X coarsened to that level."""
        X = generate_fbm(0.6, 10, 8.0, seed=4)
        records = [simulate_walk(n, 1.0, seed=n) for n in (6, 8, 10)]
        series = variation_series("V", X, records, "cos", 2)
        assert sorted(series.values) == [6, 8, 10]
        for rec in records:
            expected = v_statistic(X.coarsen(rec.level), rec, "cos", 2)
            assert series.values[rec.level] == expected
        assert series.weight == "cos"

    def test_w_series(self):
        """W uses the walk endpoint of each record."""
        X = generate_fbm(0.6, 8, 8.0, seed=4)
        rec = simulate_walk(8, 1.0, seed=1)
        series = variation_series("W", X, [rec], "one", 3)
        assert series.values[8] == w_statistic_at_index(X, "one", 3, rec.j_star)

    def test_unknown_statistic(self):
        """Only V, W, S and R are known."""
        X = generate_fbm(0.6, 8, 8.0, seed=4)
        with pytest.raises(ValueError):
            variation_series("Q", X, [simulate_walk(8, 1.0, seed=1)], "one", 2)

    def test_series_validation(self):
        """Non-finite values and uneven levels are rejected."""
        with pytest.raises(ValueError):
            VariationSeries("V", 2, "one", 0.5, 1.0, {8: float("nan")})
        with pytest.raises(ValueError):
            VariationSeries("V", 2, "one", 0.5, 1.0, {8: 1.0, 10: 1.0, 14: 1.0})


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
