import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
import yaml

from vam.harness.cli import main
from vam.harness.config import ExperimentConfig, config_from_dict, derive_seed, dump_config, load_config
from vam.harness.experiments import prepare, run_distance_experiment, run_performance_experiment, run_subsample_experiment, run_variogram_experiment
from vam.harness.report import ExperimentReport, MethodRow, relative_error, strip_wall_clock
from vam.interp import Granularity, Method

SMALL = {
    "portfolio_size": 40,
    "seed": 5,
    "mc": {"inner_scenarios": 60},
    "grid": {
        "ages": [30, 50],
        "account_values": [1.0e5, 2.0e5],
        "gmdb_values": [1.0e5, 2.0e5],
        "gmwb_values": [1.0e5, 2.0e5],
        "withdrawal_rates": [0.04, 0.08],
        "maturities": [10, 20],
    },
    "methods": [
        {"kind": "kriging", "variogram": "spherical"},
        {"kind": "idw", "power": 10},
        {"kind": "rbf", "kernel": "multiquadric", "epsilon": 1},
        {"kind": "rbf", "kernel": "gaussian", "epsilon": 1},
    ],
    "variogram_models": ["spherical", "exponential", "poly2"],
    "subsample_removals": [10, 40],
}


@pytest.fixture(scope="module")
def small_cfg():
    return config_from_dict(SMALL)


@pytest.fixture(scope="module")
def pipe(small_cfg):
    return prepare(small_cfg)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.portfolio_size == 20000 and len(cfg.methods) == 10
        assert cfg.granularities == (Granularity.PORTFOLIO, Granularity.PER_POLICY)

    def test_yaml_round_trip(self, tmp_path, small_cfg):
        path = tmp_path / "c.yaml"
        dump_config(small_cfg, path)
        again = load_config(path)
        assert again.to_dict() == small_cfg.to_dict()
        assert again.grid == small_cfg.grid and again.methods == small_cfg.methods

    def test_full_default_round_trip(self, tmp_path):
        path = tmp_path / "c.yaml"
        dump_config(ExperimentConfig(), path)
        assert load_config(path) == ExperimentConfig()

    @pytest.mark.parametrize(
        "data, match",
        [
            ({"portfolio_sise": 10}, "unknown config keys"),
            ({"representatives": "random"}, "representatives"),
            ({"threads": 0}, "threads"),
            ({"mc": {"volatility": -1}}, "volatility"),
            ({"methods": [{"kind": "kriging", "variogram": "spherical", "power": 2, "colour": 1}]}, "colour"),
        ],
    )
    def test_invalid(self, data, match):
        with pytest.raises((ValueError, TypeError), match=match):
            config_from_dict(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.yaml")

    def test_empty_file_gives_defaults(self, tmp_path):
        (tmp_path / "c.yaml").write_text("")
        assert load_config(tmp_path / "c.yaml") == ExperimentConfig()

    def test_derive_seed(self):
        assert derive_seed(1, "a") == derive_seed(1, "a")
        assert len({derive_seed(1, "a"), derive_seed(1, "b"), derive_seed(2, "a")}) == 3
        cfg = ExperimentConfig(seed=3)
        assert cfg.mc_for("portfolio").seed != cfg.mc_for("representatives").seed


class TestReport:
    def test_relative_error_sign(self):
        # estimate less negative than the baseline -> positive error
        assert relative_error(-0.9, -1.0) == pytest.approx(0.1)
        assert relative_error(-1.2, -1.0) == pytest.approx(-0.2)
        assert relative_error(1.1, 1.0) == pytest.approx(0.1)

    def test_consistency_check_catches_tampering(self):
        r = ExperimentReport("x", baseline={"delta": -2.0, "time": 1.0})
        r.add(MethodRow("m", delta=-1.0, err=0.5, elapsed=0.1))
        r.check_consistency()
        r.rows[0].err = 0.4
        with pytest.raises(AssertionError):
            r.check_consistency()

    def test_speedup(self):
        r = ExperimentReport("x", baseline={"delta": -2.0, "time": 10.0}, calibration={"mc_time": 1.0})
        r.add(MethodRow("m", delta=-1.0, err=0.5, elapsed=0.5, fit_time=0.5))
        assert r.speedup("m") == pytest.approx(5.0)
        assert r.speedup("other") is None

    def test_strip_wall_clock(self):
        data = {"time": 1, "a": [{"elapsed": 2, "b": 3}], "speedup": 4.0, "meta": {"fit_time": 1, "c": 2}}
        assert strip_wall_clock(data) == {"a": [{"b": 3}], "meta": {"c": 2}}


class TestExperiments:
    def test_pipeline(self, pipe):
        assert len(pipe.portfolio) == 40
        assert len(pipe.representatives) == 96
        assert pipe.rep_deltas.shape == (96,)

    def test_performance(self, small_cfg, pipe):
        report = run_performance_experiment(small_cfg, pipe)
        report.check_consistency()
        assert len(report.rows) == 4 * 2
        krig = report.row("Kriging (spherical)")
        assert krig.status == "ok" and math.isfinite(krig.err)
        per = report.row("Kriging (spherical)", granularity="per_policy")
        assert per.delta == pytest.approx(krig.delta, rel=1e-10)
        assert report.meta["speedup_method"] == "Kriging (spherical)"
        assert "Kriging (spherical)" in report.to_text()
        assert json.loads(report.to_json())["experiment"] == "perf"

    def test_deterministic(self, small_cfg, pipe):
        a = run_performance_experiment(small_cfg, prepare(small_cfg)).to_dict()
        b = run_performance_experiment(small_cfg, pipe).to_dict()
        assert strip_wall_clock(a) == strip_wall_clock(b)

    def test_representatives_from_portfolio(self, small_cfg):
        cfg = replace(small_cfg, representatives="portfolio", methods=(Method("idw", power=10), Method("kriging")))
        report = run_performance_experiment(cfg)
        # interpolating the portfolio from itself is exact at the nodes
        assert report.row("IDW (p = 10)").err == pytest.approx(0.0, abs=1e-12)
        assert report.row("Kriging (spherical)").err == pytest.approx(0.0, abs=1e-8)

    def test_no_methods(self, small_cfg, pipe):
        report = run_performance_experiment(replace(small_cfg, methods=()), pipe)
        assert report.rows == [] and report.baseline["delta"] == pipe.baseline.total_delta
        assert "MC baseline" in report.to_text()

    def test_zero_removal_matches_performance(self, small_cfg, pipe):
        cfg = replace(small_cfg, subsample_removals=(0,), granularities=(Granularity.PORTFOLIO,))
        sub = run_subsample_experiment(cfg, pipe)
        perf = run_performance_experiment(cfg, pipe)
        assert [r.delta for r in sub.rows] == [r.delta for r in perf.rows]
        assert all(s.err_std == 0.0 for s in sub.summary if s.err_std is not None)

    def test_repeated_removal_identical(self, small_cfg, pipe):
        report = run_subsample_experiment(replace(small_cfg, subsample_removals=(30, 30)), pipe)
        half = len(report.rows) // 2
        assert [r.delta for r in report.rows[:half]] == [r.delta for r in report.rows[half:]]

    def test_subsample(self, small_cfg, pipe):
        report = run_subsample_experiment(small_cfg, pipe)
        report.check_consistency()
        assert {r.variant for r in report.rows} == {"remove 10", "remove 40"}
        summary = {s.method: s for s in report.summary}
        idw = summary["IDW (p = 10)"]
        errs = [r.err for r in report.rows if r.method == "IDW (p = 10)"]
        assert idw.err_mean == pytest.approx(np.mean(errs)) and idw.err_std == pytest.approx(np.std(errs))
        assert idw.runs == 2 and idw.failed == 0

    def test_subsample_too_many(self, small_cfg, pipe):
        with pytest.raises(ValueError, match="cannot remove"):
            run_subsample_experiment(replace(small_cfg, subsample_removals=(96,)), pipe)

    def test_distance(self, small_cfg, pipe):
        report = run_distance_experiment(small_cfg, pipe)
        report.check_consistency()
        rate = [r for r in report.rows if r.variant.startswith("rate_adjusted")]
        assert all(r.status == "ok" for r in rate if r.method.startswith("IDW"))
        # AV/GD = 1 twice per cell: equal features put representatives at zero distance
        assert report.row("Kriging (spherical)", "rate_adjusted gamma=1").status == "*"

    def test_variogram(self, small_cfg, pipe, tmp_path):
        report = run_variogram_experiment(small_cfg, pipe, export_dir=tmp_path)
        assert report.meta["scatter_pairs"] == 96 * 95 // 2
        assert sum(report.meta["bin_counts"]) == 96 * 95 // 2
        assert set(report.meta["variogram_models"]) == {"spherical", "exponential", "poly2"}
        with open(report.exports["scatter"]) as fh:
            assert sum(1 for _ in fh) == 96 * 95 // 2 + 1
        assert [r.method for r in report.rows] == ["Kriging (spherical)", "Kriging (exponential)", "Kriging (poly2)"]
        with open(report.exports["bins"]) as fh:
            exported = [float(r["semivariance"]) for r in csv.DictReader(fh)]
        assert exported == report.meta["bin_means"]


class TestCLI:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump(SMALL))
        return path

    def test_pipeline_commands(self, tmp_path, config_file, capsys):
        out = tmp_path / "out"
        for cmd in ("generate", "mc-baseline", "calibrate", "estimate"):
            assert main([cmd, "--config", str(config_file), "--out", str(out)]) == 0
        for name in ("portfolio.csv", "representatives.csv", "portfolio_deltas.csv", "mc_baseline.json",
                     "representative_deltas.csv", "variogram_bins.csv", "variogram_models.csv",
                     "calibration.json", "estimate_report.json", "estimate_report.txt"):
            assert (out / name).exists(), name
        with open(out / "estimates_kriging_spherical.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 40 and set(rows[0]) == {"id", "delta_estimate"}
        report = json.loads((out / "estimate_report.json").read_text())
        baseline = json.loads((out / "mc_baseline.json").read_text())
        assert report["baseline"]["delta"] == pytest.approx(baseline["delta"])
        total = sum(float(r["delta_estimate"]) for r in rows)
        krig = [r for r in report["rows"] if r["method"] == "Kriging (spherical)" and r["granularity"] == "per_policy"][0]
        assert total == pytest.approx(krig["delta"], rel=1e-12)

    def test_estimate_needs_calibration(self, tmp_path, config_file):
        with pytest.raises(SystemExit, match="calibrate"):
            main(["estimate", "--config", str(config_file), "--out", str(tmp_path)])

    def test_seed_override(self, tmp_path, config_file):
        main(["generate", "--config", str(config_file), "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["generate", "--config", str(config_file), "--out", str(tmp_path / "b"), "--seed", "2"])
        assert (tmp_path / "a" / "portfolio.csv").read_text() != (tmp_path / "b" / "portfolio.csv").read_text()

    @pytest.mark.parametrize("kind", ["perf", "subsample", "distance"])
    def test_experiment(self, tmp_path, config_file, kind, capsys):
        assert main(["experiment", kind, "--config", str(config_file), "--out", str(tmp_path), "--threads", "2"]) == 0
        report = json.loads((tmp_path / f"report_{kind}.json").read_text())
        assert report["experiment"] == kind and report["meta"]["threads"] == 2
        assert (tmp_path / f"report_{kind}.txt").read_text() in capsys.readouterr().out

    def test_threads_do_not_change_results(self, tmp_path, config_file):
        main(["experiment", "perf", "--config", str(config_file), "--out", str(tmp_path / "one"), "--threads", "1"])
        main(["experiment", "perf", "--config", str(config_file), "--out", str(tmp_path / "two"), "--threads", "3"])
        one = json.loads((tmp_path / "one" / "report_perf.json").read_text())
        two = json.loads((tmp_path / "two" / "report_perf.json").read_text())
        one["meta"].pop("threads"), two["meta"].pop("threads")
        for key in ("threads", "output_dir"):
            one["meta"]["config"].pop(key), two["meta"]["config"].pop(key)
        assert strip_wall_clock(one) == strip_wall_clock(two)

    def test_bad_subcommand(self):
        with pytest.raises(SystemExit):
            main(["experiment", "nonsense"])
