"""Tests for experiment orchestration and report emission."""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from flowmax import engine, reporting
from flowmax.config import ExperimentConfig
from flowmax.errors import DomainError, IoError
from flowmax.reporting import (
    GrowthHypotheses,
    ReportBundle,
    bundle_from_json,
    emit_report,
    execute_experiment,
    write_csv,
    write_report,
)
from flowmax.stats import dkw_epsilon


@pytest.fixture(scope="module")
def evd_bundle():
    config = ExperimentConfig(experiment="evd", samples=2000, seed=7)
    return execute_experiment(config)


def _csv_rows(text):
    lines = text.splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


class TestCheckConditions:
    def test_no_table(self):
        config = ExperimentConfig(experiment="check-conditions", seed=0)
        bundle = execute_experiment(config)
        assert bundle.columns is None
        assert bundle.ecdf_csv is None
        assert "csv_sha256" not in bundle.summary
        assert bundle.summary["block_size"] == 15
        assert bundle.summary["rho"] == 1.3

    def test_default_hypotheses_use_flow_spectrum(self):
        config = ExperimentConfig(experiment="check-conditions")
        bundle = execute_experiment(config)
        # flow (1/2, -1/2): adjoint weights are differences, top one is 1
        assert bundle.summary["gamma"] == 1.0
        assert bundle.summary["C"] == pytest.approx(0.5)
        assert bundle.summary["ratio"] == pytest.approx(1 / 1.3)
        assert bundle.summary["admissible_sparsity"] is False

    def test_hypotheses_override(self):
        config = ExperimentConfig(experiment="check-conditions")
        hyp = GrowthHypotheses(mixing_delta=2.6)
        bundle = execute_experiment(config, hypotheses=hyp)
        assert bundle.summary["C"] == pytest.approx(1.0)
        assert bundle.summary["admissible_sparsity"] is True
        assert bundle.summary["admissible_growth"] is True
        assert bundle.summary["sigma"] > 0

    def test_text_format_no_table(self):
        config = ExperimentConfig(experiment="check-conditions")
        text = emit_report(execute_experiment(config), "text")
        assert "[cdf comparison]" not in text
        assert "admissible_sparsity" in text

    def test_csv_format_rejected(self):
        config = ExperimentConfig(experiment="check-conditions")
        with pytest.raises(IoError, match="no table"):
            emit_report(execute_experiment(config), "csv")


class TestTailExperiment:
    def test_bundle(self):
        config = ExperimentConfig(experiment="tail", samples=200_000, seed=5)
        bundle = execute_experiment(config)
        s = bundle.summary
        assert 1.9 < s["v_hat"] < 2.1
        assert abs(s["w_rel_err"]) < 0.10
        assert s["all_bounds_ok"] is True
        assert s["minkowski_floor_ok"] is True
        assert s["min_value"] >= reporting.MINKOWSKI_FLOOR
        assert len(s["bound_checks"]) == 4
        names = [name for name, _ in bundle.columns]
        assert names == ["z", "empirical_survival", "target_survival"]
        z, emp, tgt = (np.asarray(arr) for _, arr in bundle.columns)
        assert z[0] == 0.0
        # survival columns decrease and stay within [0, 1]
        assert np.all(np.diff(emp) <= 0)
        assert np.all((emp >= 0) & (emp <= 1))
        assert np.all((tgt >= 0) & (tgt <= 1))
        # the bound checks are recomputable from the raw columns
        for check in s["bound_checks"]:
            i = int(np.argmin(np.abs(z - check["z"])))
            assert emp[i] == pytest.approx(check["phi_hat"], abs=1e-12)

    def test_text_has_no_cdf_table(self):
        config = ExperimentConfig(experiment="tail", samples=5000, seed=1)
        text = emit_report(execute_experiment(config), "text")
        assert "[cdf comparison]" not in text
        assert "v_hat" in text


class TestEvdExperiment:
    def test_summary_bounds(self, evd_bundle):
        s = evd_bundle.summary
        assert s["samples"] == 2000
        assert s["block_size"] == 15
        assert s["k"] == 1
        assert s["law_v"] == 2.0
        assert s["ks_vs_target"] < 0.05
        assert s["ks_vs_oracle"] < 0.06
        assert s["dkw_band"] == dkw_epsilon(2000, 0.01)
        assert s["wall_time"] > 0

    def test_csv_shape_and_hash(self, evd_bundle):
        text = emit_report(evd_bundle, "csv")
        header, data = _csv_rows(text)
        assert header == ["r", "empirical", "target", "oracle"]
        assert data.shape == (2000, 4)
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        assert digest == evd_bundle.summary["csv_sha256"]

    def test_summary_recomputable_from_csv(self, evd_bundle):
        header, data = _csv_rows(emit_report(evd_bundle, "csv"))
        r, emp, tgt, orc = data.T
        n = r.size
        ks_target = np.max(np.maximum(np.abs(emp - tgt),
                                      np.abs(emp - 1.0 / n - tgt)))
        # two-sample sup gap: oracle steps between consecutive r values are
        # bounded by the oracle value at the next row
        ks_oracle = np.max(np.maximum(emp - orc, orc - emp + 1.0 / n))
        assert ks_target == pytest.approx(evd_bundle.summary["ks_vs_target"],
                                          abs=1e-12)
        assert ks_oracle == pytest.approx(evd_bundle.summary["ks_vs_oracle"],
                                          abs=1e-12)

    def test_columns_monotone(self, evd_bundle):
        _, data = _csv_rows(emit_report(evd_bundle, "csv"))
        r, emp, tgt, orc = data.T
        assert np.all(np.diff(r) >= 0)
        assert np.all(np.diff(emp) > 0)
        assert np.all(np.diff(tgt) >= 0)
        assert np.all(np.diff(orc) >= 0)

    def test_json_round_trip(self, evd_bundle):
        text = emit_report(evd_bundle, "json")
        rebuilt = bundle_from_json(text)
        assert rebuilt.params == evd_bundle.params
        assert rebuilt.summary == evd_bundle.summary
        assert rebuilt.ecdf_csv == "evd.csv"
        assert rebuilt.schema_version == reporting.SCHEMA_VERSION
        # canonical ordering survives serialization
        payload = json.loads(text)
        assert list(payload) == ["schema_version", "params", "summary",
                                 "ecdf_csv"]

    def test_text_table(self, evd_bundle):
        text = emit_report(evd_bundle, "text")
        assert "[cdf comparison]" in text
        assert "experiment = evd" in text
        lines = [ln for ln in text.splitlines()
                 if ln.strip() and ln.strip()[0] in "-0123456789"]
        table = np.array([[float(v) for v in ln.split()] for ln in lines])
        assert table.shape == (5, 4)
        assert list(table[:, 0]) == [-2.0, -1.0, 0.0, 1.0, 2.0]
        for col in range(1, 4):
            assert np.all(np.diff(table[:, col]) >= 0)
            assert np.all((table[:, col] >= 0) & (table[:, col] <= 1))


class TestKthExperiment:
    def test_iid_empirical_column(self):
        config = ExperimentConfig(experiment="kth", k=2, samples=1000, seed=3)
        bundle = execute_experiment(config)
        names = [name for name, _ in bundle.columns]
        assert names == ["r", "empirical", "target", "oracle",
                         "iid_empirical"]
        iid = np.asarray(bundle.columns[4][1])
        assert np.all(np.diff(iid) >= 0)
        assert np.all((iid >= 0) & (iid <= 1))
        s = bundle.summary
        assert s["k"] == 2
        assert s["marginal_samples"] == 1_000_000
        assert s["ks_vs_iid_empirical"] < 0.09
        assert s["ks_vs_target"] < 0.09


class TestDistanceExperiments:
    def test_returns_bundle(self, monkeypatch):
        monkeypatch.setattr(reporting, "_marginal_fit_count", lambda s: 50_000)
        config = ExperimentConfig(experiment="returns", samples=500, seed=11)
        bundle = execute_experiment(config)
        s = bundle.summary
        assert s["law_v"] == 3.0
        assert 2.4 < s["v_hat"] < 3.6
        assert s["law_w"] == s["w_hat"]
        assert s["ks_vs_oracle"] < 0.12
        assert s["ks_vs_target"] < 0.15
        names = [name for name, _ in bundle.columns]
        assert names == ["r", "empirical", "target", "oracle"]

    def test_excursion_bundle(self, monkeypatch):
        monkeypatch.setattr(reporting, "_marginal_fit_count", lambda s: 80_000)
        config = ExperimentConfig(experiment="excursion", samples=500, seed=11)
        bundle = execute_experiment(config)
        s = bundle.summary
        assert s["law_v"] == pytest.approx(math.sqrt(2.0))
        assert 1.2 < s["v_hat"] < 1.7
        assert s["w_lower"] == pytest.approx(0.9 * s["w_hat"])
        assert s["w_upper"] == pytest.approx(1.1 * s["w_hat"])
        assert s["sandwich_band"] == dkw_epsilon(500, 0.01)
        assert "sandwich_max_violation" in s
        assert s["ks_vs_oracle"] < 0.15
        names = [name for name, _ in bundle.columns]
        assert names == ["r", "empirical", "target_lower", "target_upper",
                         "oracle"]
        _, _, lo, hi, _ = (np.asarray(arr) for _, arr in bundle.columns)
        # the lower target really is below the upper one everywhere
        assert np.all(lo <= hi)


class TestDeterminism:
    def test_workers_and_rerun_agree(self, monkeypatch):
        monkeypatch.setattr(engine, "_CHUNK", 128)
        config = ExperimentConfig(experiment="evd", samples=500, seed=42)
        a = execute_experiment(config, workers=1)
        b = execute_experiment(config, workers=2)
        assert emit_report(a, "csv") == emit_report(b, "csv")
        sa = {k: v for k, v in a.summary.items() if k != "wall_time"}
        sb = {k: v for k, v in b.summary.items() if k != "wall_time"}
        assert sa == sb


class TestPersistence:
    def test_write_report_and_csv(self, tmp_path, evd_bundle):
        report_path = write_report(evd_bundle, str(tmp_path), "json")
        csv_path = write_csv(evd_bundle, str(tmp_path))
        assert os.path.basename(report_path) == "evd-report.json"
        assert os.path.basename(csv_path) == "evd.csv"
        with open(report_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        assert payload["ecdf_csv"] == "evd.csv"
        with open(csv_path, encoding="utf-8") as fh:
            digest = hashlib.sha256(fh.read().encode("utf-8")).hexdigest()
        assert digest == evd_bundle.summary["csv_sha256"]
        # no stray temp files after the atomic renames
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "evd-report.json", "evd.csv"]

    def test_write_to_missing_dir(self, evd_bundle):
        with pytest.raises(IoError, match="cannot write"):
            write_report(evd_bundle, "/nonexistent/dir-xyz", "json")

    def test_write_csv_without_table(self):
        config = ExperimentConfig(experiment="check-conditions")
        bundle = execute_experiment(config)
        assert write_csv(bundle, "/tmp") is None

    def test_unknown_format(self, evd_bundle):
        with pytest.raises(DomainError, match="unknown report format"):
            emit_report(evd_bundle, "yaml")
        with pytest.raises(DomainError, match="unknown report format"):
            write_report(evd_bundle, "/tmp", "yaml")

    def test_malformed_json(self):
        with pytest.raises(IoError, match="malformed report json"):
            bundle_from_json("{not json")
        with pytest.raises(IoError, match="malformed report json"):
            bundle_from_json('{"params": {}}')


class TestBundleValidation:
    def test_invalid_config_rejected_before_compute(self):
        config = ExperimentConfig(experiment="evd", samples=10)
        from flowmax.errors import ConfigError
        with pytest.raises(ConfigError, match="samples"):
            execute_experiment(config)
