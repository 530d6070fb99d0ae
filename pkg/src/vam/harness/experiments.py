"""End-to-end experiment runners.

Each runner values the random portfolio with full Monte Carlo (the baseline),
values the representative contracts, calibrates the interpolators and reports
relative errors and timings. Methods that fail on a singular system are
reported with status ``*`` and never abort the run.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import _backend
from ..distance import DistanceKind, DistanceSpec, max_age_of
from ..interp import Granularity, Method, SampleSet, SingularSystemError, estimate_portfolio
from ..mc import DEFAULT_MORTALITY, DeltaBatchResult, MortalityTable, delta_batch
from ..portfolio import Portfolio, generate_random_portfolio, generate_representative_grid
from ..variogram import (
    VariogramModel,
    empirical_variogram,
    fit_family,
    pair_scatter,
    bin_pairs,
    write_models_csv,
    write_scatter_csv,
)
from .config import ExperimentConfig, derive_seed
from .report import ExperimentReport, MethodRow, SummaryRow, relative_error

log = logging.getLogger(__name__)


@dataclass
class Pipeline:
    """Portfolio, representatives and their Monte Carlo deltas."""

    cfg: ExperimentConfig
    portfolio: Portfolio
    baseline: DeltaBatchResult
    representatives: Portfolio
    rep_deltas: np.ndarray
    rep_mc_time: float
    mortality: MortalityTable

    def distance_spec(self, **overrides) -> DistanceSpec:
        d = replace(self.cfg.distance, **overrides)
        return d.spec(self.cfg.ranges.declared(), max_age_of(self.portfolio, self.representatives))

    def baseline_dict(self) -> dict:
        return {
            "delta": self.baseline.total_delta,
            "std_error": self.baseline.total_delta_standard_error,
            "time": self.baseline.elapsed,
            "n_contracts": len(self.portfolio),
            "inner_scenarios": self.cfg.mc.inner_scenarios,
        }

    def calibration_dict(self) -> dict:
        return {"n_representatives": len(self.representatives), "mc_time": self.rep_mc_time}


def load_mortality(cfg: ExperimentConfig) -> MortalityTable:
    return MortalityTable.from_csv(cfg.mortality_csv) if cfg.mortality_csv else DEFAULT_MORTALITY


def make_portfolio(cfg: ExperimentConfig) -> Portfolio:
    return generate_random_portfolio(cfg.portfolio_size, derive_seed(cfg.seed, "portfolio"), cfg.ranges)


def prepare(cfg: ExperimentConfig, portfolio: Portfolio | None = None, mortality: MortalityTable | None = None) -> Pipeline:
    mortality = mortality or load_mortality(cfg)
    portfolio = portfolio if portfolio is not None else make_portfolio(cfg)
    log.info("MC baseline on %d contracts", len(portfolio))
    baseline = delta_batch(portfolio, cfg.mc_for("portfolio"), mortality, threads=cfg.threads)
    if cfg.representatives == "portfolio":
        reps, rep_deltas, rep_time = portfolio, baseline.deltas, baseline.elapsed
    else:
        reps = generate_representative_grid(cfg.grid)
        log.info("MC calibration on %d representatives", len(reps))
        rb = delta_batch(reps, cfg.mc_for("representatives"), mortality, threads=cfg.threads)
        rep_deltas, rep_time = rb.deltas, rb.elapsed
    return Pipeline(cfg, portfolio, baseline, reps, rep_deltas, rep_time, mortality)


def fit_models(sample: SampleSet, names, poly_range: float | None = None) -> tuple[dict, dict, float]:
    """Fit every named variogram on the sample; failures are returned separately."""
    start = time.perf_counter()
    models: dict[str, VariogramModel] = {}
    failures: dict[str, str] = {}
    names = list(dict.fromkeys(names))
    if not names:
        return models, failures, 0.0
    try:
        ev = empirical_variogram(sample.arrays, sample.values, sample.spec)
    except ValueError as exc:
        return models, {n: str(exc) for n in names}, time.perf_counter() - start
    for name in sorted(names, key=lambda n: n.startswith("poly")):
        try:
            rng = poly_range
            if name.startswith("poly") and rng is None:
                rng = models["spherical"].range if "spherical" in models else None
            models[name] = fit_family(ev, name, poly_range=rng)
        except (ValueError, np.linalg.LinAlgError) as exc:
            failures[name] = str(exc)
    return models, failures, time.perf_counter() - start


def run_methods(
    report: ExperimentReport,
    reference: float | None,
    sample: SampleSet,
    portfolio,
    methods,
    granularities=(Granularity.PORTFOLIO,),
    variant: str = "",
    refactor_per_policy: bool = False,
    poly_range: float | None = None,
    per_policy_out: dict | None = None,
) -> list[MethodRow]:
    """Estimate with every method and granularity, appending one row each.

    When ``per_policy_out`` is given, per-policy estimates are stored in it
    keyed by method label.
    """
    needed = [m.variogram for m in methods if m.kind == "kriging"]
    models, failures, fit_time = fit_models(sample, needed, poly_range)
    rows = []
    for method in methods:
        for gran in granularities:
            row = MethodRow(method=method.label, variant=variant, granularity=Granularity(gran).value)
            model = None
            if method.kind == "kriging":
                row.fit_time = fit_time
                model = models.get(method.variogram)
                if model is None:
                    row.status, row.message = "*", failures.get(method.variogram, "variogram fit failed")
                    rows.append(row)
                    continue
                if model.status != "ok":
                    row.message = "; ".join(model.warnings)
            try:
                est = estimate_portfolio(method, sample, portfolio, gran, model=model, refactor_per_policy=refactor_per_policy)
            except SingularSystemError as exc:
                row.status, row.message = "*", str(exc)
            else:
                row.delta = est.portfolio_delta
                if per_policy_out is not None and est.per_policy is not None:
                    per_policy_out[method.label] = est.per_policy
                row.elapsed = est.elapsed
                if np.isfinite(est.portfolio_delta):
                    if reference is not None:
                        row.err = relative_error(est.portfolio_delta, reference)
                else:
                    row.status, row.message = "*", "non-finite estimate"
                if model is not None and model.status != "ok" and row.status == "ok":
                    row.status = "warning"
            rows.append(row)
    for r in rows:
        report.add(r)
    return rows


def _new_report(kind: str, pipe: Pipeline) -> ExperimentReport:
    return ExperimentReport(
        experiment=kind,
        baseline=pipe.baseline_dict(),
        calibration=pipe.calibration_dict(),
        meta={"backend": _backend.BACKEND, "threads": pipe.cfg.threads, "config": pipe.cfg.to_dict()},
    )


def _headline_speedup(report: ExperimentReport, variant: str = "") -> None:
    for r in report.rows:
        if r.granularity == "portfolio" and r.variant == variant and r.elapsed is not None:
            report.meta["speedup_method"] = r.method
            report.meta["speedup"] = report.speedup(r.method, variant)
            return


def run_performance_experiment(cfg: ExperimentConfig, pipe: Pipeline | None = None) -> ExperimentReport:
    """Accuracy and timing of every configured method in both granularities."""
    pipe = pipe or prepare(cfg)
    report = _new_report("perf", pipe)
    sample = SampleSet(pipe.representatives, pipe.rep_deltas, pipe.distance_spec())
    run_methods(
        report,
        pipe.baseline.total_delta,
        sample,
        pipe.portfolio,
        cfg.methods,
        cfg.granularities,
        refactor_per_policy=cfg.refactor_per_policy,
    )
    _headline_speedup(report)
    return report


def run_subsample_experiment(cfg: ExperimentConfig, pipe: Pipeline | None = None) -> ExperimentReport:
    """Rerun every method after removing random representatives; mean/std of errors."""
    pipe = pipe or prepare(cfg)
    report = _new_report("subsample", pipe)
    full = SampleSet(pipe.representatives, pipe.rep_deltas, pipe.distance_spec())
    n = len(full)
    for k in cfg.subsample_removals:
        if k >= n:
            raise ValueError(f"cannot remove {k} of {n} representatives")
        rng = np.random.default_rng(derive_seed(cfg.seed, f"subsample/{k}"))
        keep = np.sort(rng.choice(n, size=n - k, replace=False))
        run_methods(report, pipe.baseline.total_delta, full.take(keep), pipe.portfolio, cfg.methods, variant=f"remove {k}")
    for method in cfg.methods:
        errs = [r.err for r in report.rows if r.method == method.label and r.err is not None]
        runs = sum(1 for r in report.rows if r.method == method.label)
        if errs:
            report.summary.append(SummaryRow(method.label, float(np.mean(errs)), float(np.std(errs)), runs, runs - len(errs)))
        else:
            report.summary.append(SummaryRow(method.label, None, None, runs, runs, status="*"))
    return report


DISTANCE_VARIANTS = (
    ("kprototype gamma=0.05", {"kind": DistanceKind.KPROTOTYPE, "category_weight": 0.05}),
    ("rate_adjusted gamma=1", {"kind": DistanceKind.RATE_ADJUSTED, "category_weight": 1.0}),
)


def run_distance_experiment(cfg: ExperimentConfig, pipe: Pipeline | None = None) -> ExperimentReport:
    """Every method under the k-prototype distance with a small category weight
    and under the moneyness/age-weighted distance."""
    pipe = pipe or prepare(cfg)
    report = _new_report("distance", pipe)
    for variant, overrides in DISTANCE_VARIANTS:
        spec = pipe.distance_spec(**overrides)
        sample = SampleSet(pipe.representatives, pipe.rep_deltas, spec)
        run_methods(report, pipe.baseline.total_delta, sample, pipe.portfolio, cfg.methods, variant=variant)
    return report


def run_variogram_experiment(cfg: ExperimentConfig, pipe: Pipeline | None = None, export_dir=None) -> ExperimentReport:
    """Kriging under parametric and polynomial variogram fits, with CSV exports
    of the binned variogram, the fitted models and the full pair scatter."""
    pipe = pipe or prepare(cfg)
    report = _new_report("variogram", pipe)
    spec = pipe.distance_spec()
    sample = SampleSet(pipe.representatives, pipe.rep_deltas, spec)
    dist, sqdiff = pair_scatter(sample.arrays, sample.values, spec)
    ev = bin_pairs(dist, sqdiff)
    models, failures, _ = fit_models(sample, cfg.variogram_models)
    methods = [Method("kriging", variogram=name) for name in cfg.variogram_models]
    run_methods(report, pipe.baseline.total_delta, sample, pipe.portfolio, methods)
    report.meta["variogram_models"] = {
        name: {"nugget": m.nugget, "sill": m.sill, "range": m.range, "shape": m.shape, "poly_coeffs": m.poly_coeffs, "fit_mse": m.fit_mse, "status": m.status}
        for name, m in models.items()
    }
    report.meta["variogram_fit_failures"] = failures
    report.meta["scatter_pairs"] = int(dist.shape[0])
    report.meta["bin_means"] = ev.bin_means.tolist()
    report.meta["bin_counts"] = ev.bin_counts.tolist()
    if export_dir is not None:
        out = Path(export_dir)
        out.mkdir(parents=True, exist_ok=True)
        ev.write_csv(out / "variogram_bins.csv")
        write_models_csv(list(models.values()), out / "variogram_models.csv")
        write_scatter_csv(dist, sqdiff, out / "variogram_scatter.csv")
        report.exports = {
            "bins": str(out / "variogram_bins.csv"),
            "models": str(out / "variogram_models.csv"),
            "scatter": str(out / "variogram_scatter.csv"),
        }
    return report


EXPERIMENTS = {
    "perf": run_performance_experiment,
    "subsample": run_subsample_experiment,
    "distance": run_distance_experiment,
    "variogram": run_variogram_experiment,
}
