"""Risk-neutral Monte Carlo valuation of GMDB/GMWB guarantees.

The fund follows geometric Brownian motion at the risk-free rate. Deaths
happen at year-end with probabilities from a :class:`MortalityTable`; the
mortality expectation is taken analytically, so each scenario's cost is the
probability-weighted sum of its yearly guarantee payments.

Cash flows in policy year t (1..T):

* the fund grows by the year's gross return;
* on death during the year the insurer pays ``max(GD_{t-1} - AV_t, 0)``;
* on survival a GMWB withdrawal ``min(rate * GW, remaining balance)`` is
  taken, the insurer paying any part the fund cannot cover, and the death
  benefit base shrinks pro rata with the remaining withdrawal balance.

No fees, lapses or dynamic withdrawals are modelled.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from . import _backend
from .portfolio import Gender, Portfolio, Rider, VAContract


class ValuationError(ValueError):
    pass


@dataclass(frozen=True)
class MCConfig:
    risk_free_rate: float = 0.03
    volatility: float = 0.20
    inner_scenarios: int = 10_000
    time_step: float = 1.0
    bump_size: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.volatility > 0:
            raise ValueError(f"volatility must be > 0, got {self.volatility}")
        if self.inner_scenarios < 1:
            raise ValueError("inner_scenarios must be >= 1")
        if not 0 < self.bump_size < 1:
            raise ValueError(f"bump_size must be in (0, 1), got {self.bump_size}")
        if self.time_step <= 0 or self.time_step > 1:
            raise ValueError(f"time_step must be in (0, 1], got {self.time_step}")
        if abs(self.steps_per_year * self.time_step - 1.0) > 1e-9:
            raise ValueError("time_step must divide one year")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def steps_per_year(self) -> int:
        return max(1, round(1.0 / self.time_step))


class MortalityTable:
    """One-year death probabilities by integer age, per gender."""

    def __init__(self, ages, q_male, q_female):
        ages = np.asarray(ages, dtype=np.int64)
        q_male = np.asarray(q_male, dtype=np.float64)
        q_female = np.asarray(q_female, dtype=np.float64)
        if not (ages.shape == q_male.shape == q_female.shape) or ages.ndim != 1:
            raise ValueError("ages and q columns must be 1-d of equal length")
        if ages.size == 0 or np.any(np.diff(ages) != 1):
            raise ValueError("ages must be consecutive integers")
        for q in (q_male, q_female):
            if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
                raise ValueError("death probabilities must lie in [0, 1]")
        self.ages = ages
        self._q = {Gender.MALE: q_male, Gender.FEMALE: q_female}

    @classmethod
    def gompertz_makeham(cls, a=5e-4, b=3.5e-5, c=1.095, min_age=0, max_age=120):
        """Stylized stand-in table ``q_x = min(1, a + b * c**x)``, same for both genders."""
        ages = np.arange(min_age, max_age + 1)
        q = np.minimum(1.0, a + b * c ** ages.astype(float))
        return cls(ages, q, q.copy())

    @classmethod
    def constant(cls, q, min_age=0, max_age=120):
        ages = np.arange(min_age, max_age + 1)
        return cls(ages, np.full(ages.shape, q, dtype=float), np.full(ages.shape, q, dtype=float))

    @classmethod
    def from_csv(cls, source) -> "MortalityTable":
        ages, qm, qf = [], [], []
        with open(source, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["age", "q_male", "q_female"]:
                raise ValueError(f"{source}: expected header age,q_male,q_female")
            for line_no, row in enumerate(reader, start=2):
                try:
                    ages.append(int(row["age"]))
                    qm.append(float(row["q_male"]))
                    qf.append(float(row["q_female"]))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{source}: row {line_no}: {exc}") from exc
        order = np.argsort(ages)
        return cls(np.array(ages)[order], np.array(qm)[order], np.array(qf)[order])

    def to_csv(self, destination) -> None:
        with open(destination, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("age", "q_male", "q_female"))
            for i, age in enumerate(self.ages):
                w.writerow((int(age), repr(float(self._q[Gender.MALE][i])), repr(float(self._q[Gender.FEMALE][i]))))

    def q(self, gender: Gender, ages) -> np.ndarray:
        ages = np.asarray(ages, dtype=np.int64)
        lo, hi = self.ages[0], self.ages[-1]
        if ages.size and (ages.min() < lo or ages.max() > hi):
            raise ValueError(
                f"mortality table covers ages {lo}..{hi}, need {ages.min()}..{ages.max()}"
            )
        return self._q[Gender(gender)][ages - lo]

    def with_probabilities(self, gender: Gender, age: int, horizon: int):
        """Death-in-year and survive-year probabilities for years 1..horizon."""
        q = self.q(gender, np.arange(age, age + horizon))
        survive = np.cumprod(1.0 - q)
        alive_start = np.concatenate(([1.0], survive[:-1]))
        return alive_start * q, survive


DEFAULT_MORTALITY = MortalityTable.gompertz_makeham()


@dataclass(frozen=True)
class ValuationResult:
    liability: float
    standard_error: float
    delta: float | None = None
    delta_standard_error: float | None = None
    status: str = "ok"


def contract_rng(config: MCConfig, contract_id: int) -> np.random.Generator:
    """Per-contract stream keyed on (seed, id), independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence([config.seed, int(contract_id)]))


def _annual_growth(config: MCConfig, horizon: int, rng: np.random.Generator) -> np.ndarray:
    k = config.steps_per_year
    dt = 1.0 / k
    z = rng.standard_normal((config.inner_scenarios, horizon * k))
    log_step = (config.risk_free_rate - 0.5 * config.volatility**2) * dt + config.volatility * math.sqrt(dt) * z
    if k > 1:
        log_step = log_step.reshape(config.inner_scenarios, horizon, k).sum(axis=2)
    return np.exp(log_step)


def simulate_paths(config: MCConfig, horizon: float, s0: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """GBM fund paths sampled every ``time_step`` years, initial value in column 0."""
    if not s0 > 0:
        raise ValueError(f"s0 must be > 0, got {s0}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n_steps = int(round(horizon / config.time_step))
    dt = config.time_step
    z = rng.standard_normal((config.inner_scenarios, n_steps))
    log_step = (config.risk_free_rate - 0.5 * config.volatility**2) * dt + config.volatility * math.sqrt(dt) * z
    paths = np.empty((config.inner_scenarios, n_steps + 1))
    paths[:, 0] = s0
    paths[:, 1:] = s0 * np.exp(np.cumsum(log_step, axis=1))
    return paths


def _scenario_liabilities(c: VAContract, config: MCConfig, mort: MortalityTable, av0s) -> np.ndarray:
    try:
        death_w, surv_w = mort.with_probabilities(c.gender, c.age, c.maturity)
    except ValueError as exc:
        raise ValuationError(f"contract {c.id}: {exc}") from exc
    disc = np.exp(-config.risk_free_rate * np.arange(1, c.maturity + 1))
    growth = _annual_growth(config, c.maturity, contract_rng(config, c.id))
    return _backend.va_liabilities(
        growth,
        np.ascontiguousarray(av0s, dtype=np.float64),
        float(c.gmdb_value),
        float(c.gmwb_value) if c.has_gmwb else 0.0,
        float(c.effective_withdrawal_rate),
        np.ascontiguousarray(death_w),
        np.ascontiguousarray(surv_w),
        np.ascontiguousarray(disc),
    )


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    m = x.shape[0]
    se = float(np.std(x, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(np.mean(x)), se


def value_contract(c: VAContract, config: MCConfig, mort: MortalityTable = DEFAULT_MORTALITY) -> ValuationResult:
    """Discounted expected guarantee cost and its Monte Carlo standard error."""
    cost = _scenario_liabilities(c, config, mort, [c.account_value])[0]
    liability, se = _mean_se(cost)
    return ValuationResult(liability, se)


def delta_contract(c: VAContract, config: MCConfig, mort: MortalityTable = DEFAULT_MORTALITY) -> ValuationResult:
    """Central finite-difference delta w.r.t. account value, common random numbers.

    The same paths drive the base and both bumped valuations, so the
    liability matches :func:`value_contract` bit for bit.
    """
    av = c.account_value
    if av == 0:
        base = value_contract(c, config, mort)
        return ValuationResult(base.liability, base.standard_error, 0.0, 0.0, status="degenerate")
    b = config.bump_size
    cost = _scenario_liabilities(c, config, mort, [av, av * (1 + b), av * (1 - b)])
    liability, se = _mean_se(cost[0])
    delta, dse = _mean_se((cost[1] - cost[2]) / (2 * b * av))
    return ValuationResult(liability, se, delta, dse)


def black_scholes_put(s0, strike, vol, rate, expiry):
    """European put price and delta; vectorized over ``expiry``."""
    expiry = np.asarray(expiry, dtype=float)
    if strike <= 0:
        return np.zeros_like(expiry), np.zeros_like(expiry)
    sq = vol * np.sqrt(expiry)
    d1 = (np.log(s0 / strike) + (rate + 0.5 * vol**2) * expiry) / sq
    d2 = d1 - sq
    price = strike * np.exp(-rate * expiry) * ndtr(-d2) - s0 * ndtr(-d1)
    return price, ndtr(d1) - 1.0


def closed_form_gmdb(c: VAContract, config: MCConfig, mort: MortalityTable = DEFAULT_MORTALITY) -> tuple[float, float]:
    """GMDB liability and delta as a mortality-weighted strip of Black-Scholes puts."""
    if c.rider is not Rider.GMDB:
        raise ValueError("closed form only applies to GMDB-only contracts")
    death_w, _ = mort.with_probabilities(c.gender, c.age, c.maturity)
    if c.gmdb_value == 0:
        return 0.0, 0.0
    t = np.arange(1, c.maturity + 1, dtype=float)
    price, delta = black_scholes_put(c.account_value, c.gmdb_value, config.volatility, config.risk_free_rate, t)
    return float(np.sum(death_w * price)), float(np.sum(death_w * delta))


@dataclass
class DeltaBatchResult:
    ids: np.ndarray
    deltas: np.ndarray
    delta_standard_errors: np.ndarray
    liabilities: np.ndarray
    statuses: list
    elapsed: float
    threads: int

    @property
    def total_delta(self) -> float:
        return float(np.sum(self.deltas))

    @property
    def total_delta_standard_error(self) -> float:
        # independent streams per contract
        return float(np.sqrt(np.sum(self.delta_standard_errors**2)))

    def write_csv(self, destination) -> None:
        with open(destination, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("id", "delta", "std_error", "liability"))
            for i, d, s, l in zip(self.ids, self.deltas, self.delta_standard_errors, self.liabilities):
                w.writerow((int(i), repr(float(d)), repr(float(s)), repr(float(l))))


def read_deltas(source) -> dict[int, tuple[float, float]]:
    """Read an ``id,delta,std_error[,liability]`` file into ``{id: (delta, se)}``."""
    out = {}
    with open(source, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out[int(row["id"])] = (float(row["delta"]), float(row["std_error"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{source}: row {line_no}: {exc}") from exc
    return out


def delta_batch(
    contracts: Portfolio | Sequence[VAContract],
    config: MCConfig,
    mort: MortalityTable = DEFAULT_MORTALITY,
    threads: int = 1,
) -> DeltaBatchResult:
    """Delta of every contract; results do not depend on order or thread count."""
    contracts = list(contracts)
    start = time.perf_counter()

    def one(c):
        try:
            return delta_contract(c, config, mort)
        except ValuationError:
            raise
        except ValueError as exc:
            raise ValuationError(f"contract {c.id}: {exc}") from exc

    if threads > 1 and len(contracts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, contracts))
    else:
        results = [one(c) for c in contracts]
    elapsed = time.perf_counter() - start
    return DeltaBatchResult(
        ids=np.array([c.id for c in contracts], dtype=np.int64),
        deltas=np.array([r.delta for r in results], dtype=float),
        delta_standard_errors=np.array([r.delta_standard_error for r in results], dtype=float),
        liabilities=np.array([r.liability for r in results], dtype=float),
        statuses=[r.status for r in results],
        elapsed=elapsed,
        threads=threads,
    )


def with_seed(config: MCConfig, seed: int) -> MCConfig:
    return replace(config, seed=int(seed))
