"""Compiled kernels vs the numpy fallback on desk-sized inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from vam import _fallback
from vam.distance import DistanceSpec, _rate_features
from vam.mc import DEFAULT_MORTALITY
from vam.portfolio import Gender, generate_random_portfolio, generate_representative_grid


def cases(n_targets: int, scenarios: int):
    grid = generate_representative_grid().arrays
    targets = generate_random_portfolio(n_targets, seed=0).arrays
    w = DistanceSpec().inverse_widths
    kproto = (np.ascontiguousarray(grid.numeric * w), grid.categorical, np.ascontiguousarray(targets.numeric * w), targets.categorical, 1.0)
    fg, ag = _rate_features(grid)
    ft, at = _rate_features(targets)
    rate = (fg, ag, grid.categorical, ft, at, targets.categorical, 60.0, 1.0)
    horizon = 25
    growth = np.exp(np.random.default_rng(0).normal(0.01, 0.2, size=(scenarios, horizon)))
    death_w, surv_w = DEFAULT_MORTALITY.with_probabilities(Gender.MALE, 40, horizon)
    disc = np.exp(-0.03 * np.arange(1, horizon + 1))
    liab = (growth, np.array([1e5, 1.01e5, 0.99e5]), 1.2e5, 1.2e5, 0.06, death_w, surv_w, disc)
    return {
        f"kprototype_cross {len(grid)}x{n_targets}": ("kprototype_cross", kproto),
        f"rate_adjusted_cross {len(grid)}x{n_targets}": ("rate_adjusted_cross", rate),
        f"va_liabilities {scenarios}x{horizon}x3": ("va_liabilities", liab),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--targets", type=int, default=2048)
    ap.add_argument("--scenarios", type=int, default=2000)
    ap.add_argument("--json", type=str, default=None, help="write results to this file")
    args = ap.parse_args(argv)

    try:
        from vam import _kernels
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    results = []
    for label, (name, inputs) in cases(args.targets, args.scenarios).items():
        row = {"kernel": label}
        for backend, mod in (("cython", _kernels), ("python", _fallback)):
            fn = getattr(mod, name)
            row[backend] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat))
        np.testing.assert_allclose(getattr(_kernels, name)(*inputs), getattr(_fallback, name)(*inputs), rtol=1e-12, atol=1e-9)
        row["speedup"] = row["python"] / row["cython"]
        results.append(row)

    width = max(len(r["kernel"]) for r in results)
    print(f"{'kernel':<{width}}  {'cython ms':>10}  {'python ms':>10}  {'speedup':>8}")
    for r in results:
        print(f"{r['kernel']:<{width}}  {1e3 * r['cython']:>10.2f}  {1e3 * r['python']:>10.2f}  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
