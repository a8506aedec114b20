"""
Tests for the Monte Carlo harness: per-part statistics, summaries,
determinism across worker counts, span handling and variation tables.
Acceptance-scale runs are marked slow.
"""

import logging
import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src import experiment
from src.config import VARIANCE_TOL, VARIANCE_TOL_LOCAL_TIME, ExperimentConfig
from src.crossing_scheme import COUPLED, WalkExcursion, record_from_steps
from src.experiment import VALUE_COLUMNS, fbm_for_walk, replicate, run, simulate_record, variation_table
from src.hermite_constants import gamma_even
from src.limit_oracles import expected_local_time_square


def small(part, hurst, **changes):
    """A configuration small enough for unit tests."""
    settings = {"levels": (4, 6), "replications": 30}
    settings.update(changes)
    return ExperimentConfig(part=part, hurst=hurst, **settings)


class TestReplicate:
    """One replication at one level."""

    def test_row_fields(self):
        """Rows carry n, rep, integrity and the part's columns."""
        row = replicate(small("P1", 0.3, weight="cos"), 3, 6)
        assert row["n"] == 6 and row["rep"] == 3
        assert row["integrity"] == 0
        assert set(row) >= {"value", "oracle"}

    def test_unit_weight_matches_oracle(self):
        """With f=1 the scaled first variation is exactly X at the walk endpoint."""
        row = replicate(small("P1", 0.3), 0, 6)
        assert row["value"] == pytest.approx(row["oracle"], abs=1e-12)

    def test_identities_row(self):
        """The identities part reports the largest relative gap."""
        row = replicate(small("identities", 0.4, r=2, weight="rational"), 1, 6)
        assert 0.0 <= row["value"] <= 1e-9

    def test_reproducible(self):
        """Same (config, rep, level), same row."""
        config = small("P4", 0.4, weight="cos")
        assert replicate(config, 2, 6) == replicate(config, 2, 6)


class TestSpanHandling:
    """fBm spans that follow the walk."""

    def test_span_doubles(self, caplog):
        """A walk beyond the initial span doubles it once."""
        config = ExperimentConfig(part="P1", hurst=0.3, horizon=2.25, levels=(4,), replications=30,
                                  span_multiplier=4.0)
        rec = record_from_steps(4, 2.25, [1] * 36)
        with caplog.at_level(logging.INFO, logger="src.experiment"):
            X = fbm_for_walk(config, rec, 0)
        assert X.span == pytest.approx(12.0)
        assert X.covers(36)
        assert "doubling" in caplog.text

    def test_coupled_retry(self, monkeypatch, caplog):
        """A coupled excursion is redrawn with the next attempt counter."""
        calls = []
        original = experiment.simulate_coupled

        def flaky(level, horizon, seed=None, **kwargs):
            calls.append(seed)
            if len(calls) == 1:
                raise WalkExcursion("too far")
            return original(level, horizon, fine_level=level + 6, seed=seed)

        monkeypatch.setattr(experiment, "simulate_coupled", flaky)
        config = small("P1", 0.3, mode=COUPLED)
        with caplog.at_level(logging.WARNING, logger="src.experiment"):
            rec = simulate_record(config, 0, 4)
        assert rec.mode == COUPLED
        assert len(calls) == 2
        assert "redrawing" in caplog.text


class TestRun:
    """End-to-end runs on small configurations."""

    def test_p1_unit_weight_passes(self):
        """f=1 has zero mse at every level."""
        result = run(small("P1", 0.3), threads=1)
        assert result.passed
        assert (result.summary["mse"] < 1e-20).all()
        assert result.summary["n"].tolist() == [4, 6]

    def test_p1_cos(self):
        """Summary carries mse, corr and a closed-form provenance."""
        result = run(small("P1", 0.3, weight="cos"), threads=1)
        summary = result.summary
        assert {"mse", "corr", "gap", "target_provenance"} <= set(summary.columns)
        assert summary["target_provenance"].iloc[0].startswith("mse against")
        assert isinstance(result.passed, bool)

    def test_identities_pass(self):
        """Exact identities hold at 1e-9 on every replication."""
        result = run(small("identities", 0.3, r=2, weight="cos"), threads=1)
        assert result.passed
        assert (result.summary["gap"] <= 1e-9).all()

    def test_p2_columns(self):
        """P2 reports the reduced statistic and a Monte Carlo target."""
        result = run(small("P2", 0.3, r=2, weight="cos"), threads=1)
        assert {"value", "reduced", "cond_var"} <= set(result.replications.columns)
        assert (result.summary["target"] > 0).all()
        assert "reduced_var" in result.summary.columns
        assert "ks_ok" in result.summary.columns
        assert "Monte Carlo" in result.summary["target_provenance"].iloc[0]

    def test_p3(self):
        """P3 compares against μ_{2r}(F(Z_end) - F(0))."""
        result = run(small("P3", 0.7, r=2, weight="rational"), threads=1)
        assert "3·" in result.summary["target_provenance"].iloc[0]
        assert result.replications["integrity"].sum() == 0

    def test_p4_closed_form_target(self):
        """For f=1 the P4 target is γ² E∫L² in closed form."""
        result = run(small("P4", 0.4), threads=1)
        target = gamma_even(0.4, 1) ** 2 * expected_local_time_square(1.0)
        assert result.summary["target"].tolist() == pytest.approx([target, target])
        assert "closed form" in result.summary["target_provenance"].iloc[0]

    def test_critical(self):
        """The H = 1/6 run attaches predicted variances."""
        result = run(small("P1_critical", 1 / 6, weight="cos"), threads=1)
        assert (result.summary["target"] > 0).all()
        assert isinstance(result.passed, bool)

    def test_constants(self):
        """The constants part returns a table and no replications."""
        result = run(ExperimentConfig(part="constants", hurst=0.5, r=2))
        assert result.passed
        assert result.replications.empty
        beta = result.constants.loc[result.constants["constant"] == "beta", "value"].item()
        assert beta == pytest.approx(math.sqrt(6.0))

    def test_thread_count_invariance(self):
        """One worker and two workers produce identical tables."""
        config = small("P4", 0.4, weight="cos")
        serial = run(config, threads=1)
        parallel = run(config, threads=2)
        assert serial.replications.equals(parallel.replications)
        assert serial.summary.equals(parallel.summary)
        assert serial.runtime["threads"] == 1 and parallel.runtime["threads"] == 2

    def test_values_frame(self):
        """Long value table sorted by (n, rep)."""
        result = run(small("P1", 0.3, weight="cos"), threads=1)
        frame = result.values_frame()
        assert list(frame.columns) == VALUE_COLUMNS
        assert len(frame) == 60
        assert frame[["n", "rep"]].equals(frame[["n", "rep"]].sort_values(["n", "rep"]).reset_index(drop=True))
        assert (frame["part"] == "P1").all()


class TestVariationTable:
    """Flattened VariationSeries across replications."""

    def test_columns(self):
        """One row per (replication, level)."""
        table = variation_table("V", 0.4, 2, "cos", 1.0, (4, 6), 3)
        assert list(table.columns) == ["statistic", "H", "r", "f", "n", "replication", "value"]
        assert len(table) == 6
        assert np.isfinite(table["value"]).all()

    def test_parity(self):
        """Levels of mixed parity cannot share one fBm path."""
        with pytest.raises(ValueError):
            variation_table("V", 0.4, 2, "cos", 1.0, (4, 5), 1)

    def test_raw_needs_coupled(self):
        """R is refused in walk mode and computed in coupled mode."""
        with pytest.raises(ValueError):
            variation_table("R", 0.4, 2, "one", 1.0, (4,), 1)
        table = variation_table("R", 0.4, 2, "one", 1.0, (4,), 1, kappa_exp=0.5, mode=COUPLED)
        assert len(table) == 1


@pytest.mark.slow
class TestAcceptance:
    """Limit theorems at moderate scale."""

    LEVELS = (8, 12, 16)

    def finest(self, result):
        return result.summary.sort_values("n").iloc[-1]

    def test_p1_cos(self):
        """H=0.35, f=cos: mse against F(Z_t) - F(0) strictly decreases and ends below 0.05."""
        result = run(ExperimentConfig(part="P1", hurst=0.35, weight="cos", levels=self.LEVELS, replications=500))
        assert result.passed
        mse = result.summary.sort_values("n")["mse"].to_numpy()
        assert np.all(np.diff(mse) < 0)
        assert mse[-1] < 0.05

    def test_p3_unit_weight(self):
        """H=0.75, r=2, f=1: the statistic tracks μ_4 (F(Z_t) - F(0)) with correlation above 0.95 at n=16."""
        result = run(ExperimentConfig(part="P3", hurst=0.75, r=2, levels=self.LEVELS, replications=500))
        assert result.passed
        summary = result.summary.sort_values("n")
        assert summary["corr"].iloc[-1] > 0.95
        assert summary["mse"].iloc[-1] < summary["mse"].iloc[0]

    def test_p2_reduced(self):
        """H=0.35, r=2, f=1: reduced variance within tolerance of β² E|Y_end| at n=16."""
        result = run(ExperimentConfig(part="P2", hurst=0.35, r=2, levels=self.LEVELS, replications=2000))
        finest = self.finest(result)
        assert abs(finest["reduced_var"] / finest["target"] - 1.0) <= VARIANCE_TOL
        assert math.isfinite(finest["ks_std_p"])
        assert (result.replications["integrity"] == 0).all()

    def test_p4_local_time(self):
        """H=0.4, r=1, f=1: variance within tolerance of γ² (8/3) / √(2π) at n=16."""
        result = run(ExperimentConfig(part="P4", hurst=0.4, levels=self.LEVELS, replications=2000))
        finest = self.finest(result)
        expected = gamma_even(0.4, 1) ** 2 * expected_local_time_square(1.0)
        assert finest["target"] == pytest.approx(expected)
        assert abs(finest["var"] / finest["target"] - 1.0) <= VARIANCE_TOL_LOCAL_TIME

    def test_identities_default(self):
        """Identities across the default levels."""
        result = run(ExperimentConfig(part="identities", hurst=0.35, r=3, weight="rational", replications=50))
        assert result.passed

    def test_p1_critical(self):
        """H=1/6, f=cos: the residual variance does not collapse."""
        result = run(ExperimentConfig(part="P1_critical", hurst=1 / 6, weight="cos", levels=(8, 10, 12),
                                      replications=300))
        assert result.passed


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
