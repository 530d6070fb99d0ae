"""Command-line entry point ``vam``.

Subcommands share ``--config``, ``--out``, ``--threads`` and ``--seed``; files
produced by one step are picked up from ``--out`` by the next::

    vam generate        -> portfolio.csv, representatives.csv
    vam mc-baseline     -> portfolio_deltas.csv, mc_baseline.json
    vam calibrate       -> representative_deltas.csv, variogram_*.csv, calibration.json
    vam estimate        -> estimates_<method>.csv, estimate_report.{json,txt}
    vam experiment KIND -> report_KIND.{json,txt}
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..distance import max_age_of
from ..interp import SampleSet
from ..mc import delta_batch, read_deltas
from ..portfolio import generate_representative_grid, read_portfolio, write_portfolio
from ..variogram import empirical_variogram, write_models_csv
from .config import ExperimentConfig, load_config
from .experiments import EXPERIMENTS, fit_models, load_mortality, make_portfolio, run_methods
from .report import ExperimentReport


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["output_dir"] = args.out
    return replace(cfg, **overrides)


def _out(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _portfolio(cfg, out):
    path = out / "portfolio.csv"
    if path.exists():
        return read_portfolio(path)
    p = make_portfolio(cfg)
    write_portfolio(p, path)
    return p


def _representatives(cfg, out):
    path = out / "representatives.csv"
    if path.exists():
        return read_portfolio(path)
    reps = generate_representative_grid(cfg.grid)
    write_portfolio(reps, path)
    return reps


def _deltas_for(portfolio, path):
    table = read_deltas(path)
    missing = [c.id for c in portfolio if c.id not in table]
    if missing:
        raise SystemExit(f"{path}: no delta for contract ids {missing[:5]}")
    return np.array([table[c.id][0] for c in portfolio])


def cmd_generate(cfg, args):
    out = _out(cfg)
    p = make_portfolio(cfg)
    write_portfolio(p, out / "portfolio.csv")
    reps = generate_representative_grid(cfg.grid)
    write_portfolio(reps, out / "representatives.csv")
    print(f"wrote {len(p)} contracts to {out / 'portfolio.csv'} and {len(reps)} representatives to {out / 'representatives.csv'}")


def cmd_mc_baseline(cfg, args):
    out = _out(cfg)
    p = _portfolio(cfg, out)
    res = delta_batch(p, cfg.mc_for("portfolio"), load_mortality(cfg), threads=cfg.threads)
    res.write_csv(out / "portfolio_deltas.csv")
    summary = {
        "delta": res.total_delta,
        "std_error": res.total_delta_standard_error,
        "time": res.elapsed,
        "n_contracts": len(p),
        "inner_scenarios": cfg.mc.inner_scenarios,
        "threads": cfg.threads,
    }
    (out / "mc_baseline.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"portfolio delta {res.total_delta:.6g} (se {res.total_delta_standard_error:.3g}) in {res.elapsed:.2f} s")


def cmd_calibrate(cfg, args):
    out = _out(cfg)
    p = _portfolio(cfg, out)
    reps = _representatives(cfg, out)
    res = delta_batch(reps, cfg.mc_for("representatives"), load_mortality(cfg), threads=cfg.threads)
    res.write_csv(out / "representative_deltas.csv")
    spec = cfg.distance.spec(cfg.ranges.declared(), max_age_of(p, reps))
    sample = SampleSet(reps, res.deltas, spec)
    ev = empirical_variogram(sample.arrays, sample.values, spec)
    ev.write_csv(out / "variogram_bins.csv")
    models, failures, fit_time = fit_models(sample, cfg.variogram_models)
    write_models_csv(list(models.values()), out / "variogram_models.csv")
    summary = {"n_representatives": len(reps), "mc_time": res.elapsed, "fit_time": fit_time, "fit_failures": failures}
    (out / "calibration.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"calibrated {len(reps)} representatives in {res.elapsed:.2f} s; fitted {sorted(models)}")


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


def cmd_estimate(cfg, args):
    out = _out(cfg)
    p = _portfolio(cfg, out)
    reps = _representatives(cfg, out)
    rep_path = out / "representative_deltas.csv"
    if not rep_path.exists():
        raise SystemExit(f"{rep_path} missing; run 'vam calibrate' first")
    sample = SampleSet(reps, _deltas_for(reps, rep_path), cfg.distance.spec(cfg.ranges.declared(), max_age_of(p, reps)))
    # the MC baseline is optional; without it errors are left blank
    base_path = out / "portfolio_deltas.csv"
    reference = float(np.sum(_deltas_for(p, base_path))) if base_path.exists() else None
    baseline = {"delta": reference if reference is not None else float("nan"), "n_contracts": len(p)}
    if reference is not None and (out / "mc_baseline.json").exists():
        saved = json.loads((out / "mc_baseline.json").read_text(encoding="utf-8"))
        baseline.update({k: saved[k] for k in ("std_error", "time") if k in saved})
    report = ExperimentReport("estimate", baseline=baseline)
    per_policy: dict = {}
    run_methods(report, reference, sample, p, cfg.methods, cfg.granularities, refactor_per_policy=cfg.refactor_per_policy, per_policy_out=per_policy)
    for label, values in per_policy.items():
        with open(out / f"estimates_{_slug(label)}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("id,delta_estimate\n")
            for c, v in zip(p, values):
                fh.write(f"{c.id},{float(v)!r}\n")
    report.to_json(out / "estimate_report.json")
    (out / "estimate_report.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")


def cmd_experiment(cfg, args):
    out = _out(cfg)
    runner = EXPERIMENTS[args.kind]
    if args.kind == "variogram":
        report = runner(cfg, export_dir=out)
    else:
        report = runner(cfg)
    report.to_json(out / f"report_{args.kind}.json")
    (out / f"report_{args.kind}.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML experiment config")
    common.add_argument("--out", type=str, default=None, help="output directory (overrides config)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo")
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vam", description="Spatial interpolation of VA portfolio delta.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the random portfolio and the representative grid").set_defaults(func=cmd_generate)
    sub.add_parser("mc-baseline", parents=[common], help="Monte Carlo delta of every portfolio contract").set_defaults(func=cmd_mc_baseline)
    sub.add_parser("calibrate", parents=[common], help="Monte Carlo delta of representatives and variogram fits").set_defaults(func=cmd_calibrate)
    sub.add_parser("estimate", parents=[common], help="interpolate portfolio delta from calibrated representatives").set_defaults(func=cmd_estimate)
    exp = sub.add_parser("experiment", parents=[common], help="run a full experiment")
    exp.add_argument("kind", choices=sorted(EXPERIMENTS))
    exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    cfg = _config(args)
    args.func(cfg, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
