"""Experiment configuration: YAML schema, defaults and seed derivation.

Every key is optional; omitted keys take the defaults below.

.. code-block:: yaml

    portfolio_size: 20000          # random contracts in the evaluation portfolio
    seed: 2024                     # root seed for all randomness
    representatives: grid          # grid | portfolio (interpolate from the portfolio itself)
    mc:
      risk_free_rate: 0.03
      volatility: 0.20
      inner_scenarios: 10000
      time_step: 1.0
      bump_size: 0.01
    mortality_csv: null            # age,q_male,q_female; null = stylized default
    ranges:                        # random-portfolio sampling space
      riders: [GMDB, GMDB_GMWB]
      genders: [Male, Female]
      age: [20, 60]
      account_value: [1.0e4, 5.0e5]
      guarantee_value: [5.0e3, 6.0e5]
      withdrawal_rates: [0.04, 0.05, 0.06, 0.07, 0.08]
      maturity: [10, 25]
    grid:                          # representative grid value lists
      riders: [GMDB, GMDB_GMWB]
      genders: [Male, Female]
      ages: [20, 30, 40, 50, 60]
      account_values: [1.0e4, 1.25e5, 2.5e5, 3.75e5, 5.0e5]
      gmdb_values: [5.0e3, 3.0e5, 6.0e5]
      gmwb_values: [5.0e3, 3.0e5, 6.0e5]
      withdrawal_rates: [0.04, 0.08]
      maturities: [10, 15, 20, 25]
    distance:
      kind: kprototype             # kprototype | rate_adjusted
      category_weight: 1.0
      max_age: null                # null = oldest contract in portfolio and grid
      ranges: null                 # null = ranges of the sampling space
    methods:                       # null = the ten default methods
      - {kind: kriging, variogram: spherical}
      - {kind: idw, power: 1}
      - {kind: rbf, kernel: multiquadric, epsilon: 1}
    variogram_models: [spherical, exponential, gaussian, poly1, poly2, poly3, poly4]
    subsample_removals: [100, 200, 400, 600, 800]
    granularities: [portfolio, per_policy]
    refactor_per_policy: false
    threads: 1
    output_dir: out
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..distance import DistanceKind, DistanceSpec
from ..interp import DEFAULT_METHODS, Granularity, Method
from ..mc import MCConfig
from ..portfolio import DEFAULT_RANGES, DEFAULT_GRID, AttributeRanges, Gender, GridSpec, Rider


def derive_seed(root: int, label: str) -> int:
    """Stable child seed for a labelled stream of the root seed."""
    state = np.random.SeedSequence([int(root), zlib.crc32(label.encode())]).generate_state(1)
    return int(state[0])


@dataclass(frozen=True)
class DistanceConfig:
    kind: DistanceKind = DistanceKind.KPROTOTYPE
    category_weight: float = 1.0
    max_age: float | None = None
    ranges: dict | None = None

    def spec(self, default_ranges, max_age: float) -> DistanceSpec:
        return DistanceSpec(
            kind=self.kind,
            category_weight=self.category_weight,
            ranges=self.ranges if self.ranges is not None else default_ranges,
            max_age=self.max_age if self.max_age is not None else max_age,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    portfolio_size: int = 20_000
    seed: int = 2024
    representatives: str = "grid"
    mc: MCConfig = field(default_factory=MCConfig)
    mortality_csv: str | None = None
    ranges: AttributeRanges = DEFAULT_RANGES
    grid: GridSpec = DEFAULT_GRID
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    methods: tuple[Method, ...] = DEFAULT_METHODS
    variogram_models: tuple[str, ...] = ("spherical", "exponential", "gaussian", "poly1", "poly2", "poly3", "poly4")
    subsample_removals: tuple[int, ...] = (100, 200, 400, 600, 800)
    granularities: tuple[Granularity, ...] = (Granularity.PORTFOLIO, Granularity.PER_POLICY)
    refactor_per_policy: bool = False
    threads: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.portfolio_size < 1:
            raise ValueError("portfolio_size must be >= 1")
        if self.representatives not in ("grid", "portfolio"):
            raise ValueError("representatives must be 'grid' or 'portfolio'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if any(k < 0 for k in self.subsample_removals):
            raise ValueError("subsample removals must be non-negative")

    def mc_for(self, label: str) -> MCConfig:
        return replace(self.mc, seed=derive_seed(self.seed, f"mc/{label}"))

    def to_dict(self) -> dict:
        return {
            "portfolio_size": self.portfolio_size,
            "seed": self.seed,
            "representatives": self.representatives,
            "mc": {k: v for k, v in asdict(self.mc).items() if k != "seed"},
            "mortality_csv": self.mortality_csv,
            "ranges": _plain(asdict(self.ranges)),
            "grid": _plain(asdict(self.grid)),
            "distance": _plain(asdict(self.distance)),
            "methods": [m.to_dict() for m in self.methods],
            "variogram_models": list(self.variogram_models),
            "subsample_removals": list(self.subsample_removals),
            "granularities": [g.value for g in self.granularities],
            "refactor_per_policy": self.refactor_per_policy,
            "threads": self.threads,
            "output_dir": self.output_dir,
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (Rider, Gender, DistanceKind)):
        return obj.value
    return obj


_TOP_KEYS = set(ExperimentConfig.__dataclass_fields__)


def config_from_dict(data: dict[str, Any] | None) -> ExperimentConfig:
    data = dict(data or {})
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    for key in ("portfolio_size", "seed", "threads"):
        if key in data:
            kw[key] = int(data[key])
    for key in ("representatives", "output_dir"):
        if key in data:
            kw[key] = str(data[key])
    if data.get("mortality_csv") is not None:
        kw["mortality_csv"] = str(data["mortality_csv"])
    if "refactor_per_policy" in data:
        kw["refactor_per_policy"] = bool(data["refactor_per_policy"])
    if data.get("mc"):
        mc = dict(data["mc"])
        mc.pop("seed", None)
        kw["mc"] = MCConfig(**mc)
    if data.get("ranges"):
        r = dict(data["ranges"])
        for key in ("riders", "genders", "withdrawal_rates", "age", "account_value", "guarantee_value", "maturity"):
            if key in r:
                r[key] = tuple(r[key])
        if "riders" in r:
            r["riders"] = tuple(Rider(v) for v in r["riders"])
        if "genders" in r:
            r["genders"] = tuple(Gender(v) for v in r["genders"])
        kw["ranges"] = AttributeRanges(**r)
    if data.get("grid"):
        g = {k: tuple(v) for k, v in dict(data["grid"]).items()}
        if "riders" in g:
            g["riders"] = tuple(Rider(v) for v in g["riders"])
        if "genders" in g:
            g["genders"] = tuple(Gender(v) for v in g["genders"])
        kw["grid"] = GridSpec(**g)
    if data.get("distance"):
        d = dict(data["distance"])
        if d.get("ranges") is not None:
            d["ranges"] = {k: tuple(float(x) for x in v) for k, v in d["ranges"].items()}
        kw["distance"] = DistanceConfig(**d)
    if data.get("methods") is not None:
        kw["methods"] = tuple(Method(**m) for m in data["methods"])
    if data.get("variogram_models") is not None:
        kw["variogram_models"] = tuple(str(v) for v in data["variogram_models"])
    if data.get("subsample_removals") is not None:
        kw["subsample_removals"] = tuple(int(v) for v in data["subsample_removals"])
    if data.get("granularities") is not None:
        kw["granularities"] = tuple(Granularity(v) for v in data["granularities"])
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
