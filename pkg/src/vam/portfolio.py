"""Variable-annuity contracts, synthetic portfolios and representative grids."""
from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC_ATTRIBUTES = (
    "account_value",
    "gmdb_value",
    "gmwb_value",
    "maturity",
    "age",
    "withdrawal_rate",
)
CATEGORICAL_ATTRIBUTES = ("gender", "rider")
CSV_HEADER = (
    "id",
    "rider",
    "gender",
    "age",
    "account_value",
    "gmdb_value",
    "gmwb_value",
    "withdrawal_rate",
    "maturity",
)


class Rider(str, enum.Enum):
    GMDB = "GMDB"
    GMDB_GMWB = "GMDB_GMWB"


class Gender(str, enum.Enum):
    MALE = "Male"
    FEMALE = "Female"


_RIDER_CODE = {Rider.GMDB: 0, Rider.GMDB_GMWB: 1}
_GENDER_CODE = {Gender.MALE: 0, Gender.FEMALE: 1}


class ContractError(ValueError):
    """A contract violates its field or rider constraints."""


class PortfolioFormatError(ValueError):
    """A portfolio file could not be parsed."""


@dataclass(frozen=True)
class VAContract:
    id: int
    rider: Rider
    gender: Gender
    age: int
    account_value: float
    gmdb_value: float
    gmwb_value: float
    withdrawal_rate: float
    maturity: int

    def __post_init__(self):
        object.__setattr__(self, "rider", Rider(self.rider))
        object.__setattr__(self, "gender", Gender(self.gender))
        validate_contract(self)

    @property
    def has_gmwb(self) -> bool:
        return self.rider is Rider.GMDB_GMWB

    @property
    def effective_withdrawal_rate(self) -> float:
        """Withdrawal rate seen by valuation and distances (0 without GMWB)."""
        return self.withdrawal_rate if self.has_gmwb else 0.0


def validate_contract(c: VAContract) -> None:
    if c.age <= 0:
        raise ContractError(f"age must be positive, got {c.age}")
    if c.maturity <= 0:
        raise ContractError(f"maturity must be positive, got {c.maturity}")
    for name in ("account_value", "gmdb_value", "gmwb_value"):
        value = getattr(c, name)
        if not np.isfinite(value) or value < 0:
            raise ContractError(f"{name} must be finite and >= 0, got {value}")
    if c.withdrawal_rate < 0:
        raise ContractError(f"withdrawal_rate must be >= 0, got {c.withdrawal_rate}")
    if c.rider is Rider.GMDB and c.gmwb_value != 0:
        raise ContractError("GMDB contract must have gmwb_value = 0")
    if c.rider is Rider.GMDB_GMWB:
        if c.gmdb_value != c.gmwb_value:
            raise ContractError(
                f"GMDB_GMWB contract needs gmdb_value == gmwb_value "
                f"({c.gmdb_value} != {c.gmwb_value})"
            )
        if c.withdrawal_rate <= 0:
            raise ContractError("GMDB_GMWB contract needs a positive withdrawal_rate")


@dataclass(frozen=True)
class ContractArrays:
    """Columnar view of a contract list, the input format of the kernels."""

    ids: np.ndarray
    numeric: np.ndarray  # (N, 6) in NUMERIC_ATTRIBUTES order
    categorical: np.ndarray  # (N, 2) int64 codes in CATEGORICAL_ATTRIBUTES order

    def __len__(self):
        return self.ids.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.numeric[:, NUMERIC_ATTRIBUTES.index(name)]

    def take(self, index) -> "ContractArrays":
        return ContractArrays(self.ids[index], self.numeric[index], self.categorical[index])


def to_arrays(contracts: Sequence[VAContract]) -> ContractArrays:
    n = len(contracts)
    numeric = np.empty((n, len(NUMERIC_ATTRIBUTES)))
    categorical = np.empty((n, 2), dtype=np.int64)
    ids = np.empty(n, dtype=np.int64)
    for i, c in enumerate(contracts):
        ids[i] = c.id
        numeric[i] = (
            c.account_value,
            c.gmdb_value,
            c.gmwb_value,
            c.maturity,
            c.age,
            c.effective_withdrawal_rate,
        )
        categorical[i] = (_GENDER_CODE[c.gender], _RIDER_CODE[c.rider])
    return ContractArrays(ids, numeric, categorical)


@dataclass(frozen=True)
class Portfolio:
    contracts: tuple[VAContract, ...]
    attribute_ranges: Mapping[str, tuple[float, float]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "contracts", tuple(self.contracts))
        ids = [c.id for c in self.contracts]
        if len(set(ids)) != len(ids):
            raise ContractError("contract ids must be unique")
        if self.attribute_ranges is None:
            object.__setattr__(self, "attribute_ranges", observed_ranges(self.contracts))
        else:
            for name, (lo, hi) in self.attribute_ranges.items():
                if lo > hi:
                    raise ContractError(f"inverted range for {name}: ({lo}, {hi})")
            for c in self.contracts:
                _check_in_ranges(c, self.attribute_ranges)

    def __len__(self):
        return len(self.contracts)

    def __iter__(self):
        return iter(self.contracts)

    def __getitem__(self, i):
        return self.contracts[i]

    @cached_property
    def arrays(self) -> ContractArrays:
        return to_arrays(self.contracts)

    def subset(self, index: Iterable[int]) -> "Portfolio":
        return Portfolio(tuple(self.contracts[i] for i in index))


def _used_attributes(c: VAContract):
    yield "account_value", c.account_value
    yield "gmdb_value", c.gmdb_value
    yield "maturity", c.maturity
    yield "age", c.age
    if c.has_gmwb:
        yield "gmwb_value", c.gmwb_value
        yield "withdrawal_rate", c.withdrawal_rate


def observed_ranges(contracts: Sequence[VAContract]) -> dict[str, tuple[float, float]]:
    """Min/max of every rider-relevant numeric attribute."""
    ranges: dict[str, tuple[float, float]] = {}
    for c in contracts:
        for name, value in _used_attributes(c):
            lo, hi = ranges.get(name, (value, value))
            ranges[name] = (min(lo, value), max(hi, value))
    return ranges


def _check_in_ranges(c: VAContract, ranges):
    for name, value in _used_attributes(c):
        if name in ranges:
            lo, hi = ranges[name]
            if not lo <= value <= hi:
                raise ContractError(
                    f"contract {c.id}: {name}={value} outside declared range [{lo}, {hi}]"
                )


@dataclass(frozen=True)
class AttributeRanges:
    """Sampling space of the random portfolio (defaults: the standard attribute ranges)."""

    riders: tuple[Rider, ...] = (Rider.GMDB, Rider.GMDB_GMWB)
    genders: tuple[Gender, ...] = (Gender.MALE, Gender.FEMALE)
    age: tuple[int, int] = (20, 60)
    account_value: tuple[float, float] = (1e4, 5e5)
    guarantee_value: tuple[float, float] = (0.5e4, 6e5)
    withdrawal_rates: tuple[float, ...] = (0.04, 0.05, 0.06, 0.07, 0.08)
    maturity: tuple[int, int] = (10, 25)

    def validate(self):
        if not self.riders or not self.genders or not self.withdrawal_rates:
            raise ValueError("categorical choice sets must be nonempty")
        for name in ("age", "account_value", "guarantee_value", "maturity"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"inverted range for {name}: ({lo}, {hi})")

    def declared(self) -> dict[str, tuple[float, float]]:
        g = tuple(float(v) for v in self.guarantee_value)
        return {
            "account_value": tuple(float(v) for v in self.account_value),
            "gmdb_value": g,
            "gmwb_value": g,
            "maturity": tuple(float(v) for v in self.maturity),
            "age": tuple(float(v) for v in self.age),
            "withdrawal_rate": (min(self.withdrawal_rates), max(self.withdrawal_rates)),
        }


DEFAULT_RANGES = AttributeRanges()


def make_contract(id, rider, gender, age, account_value, guarantee, withdrawal_rate, maturity):
    """Build a contract from one guarantee value, applying the rider constraints."""
    rider = Rider(rider)
    if rider is Rider.GMDB:
        gd, gw, wr = guarantee, 0.0, 0.0
    else:
        gd = gw = guarantee
        wr = withdrawal_rate
    return VAContract(
        id=int(id),
        rider=rider,
        gender=Gender(gender),
        age=int(age),
        account_value=float(account_value),
        gmdb_value=float(gd),
        gmwb_value=float(gw),
        withdrawal_rate=float(wr),
        maturity=int(maturity),
    )


def generate_random_portfolio(count: int, seed: int, ranges: AttributeRanges = DEFAULT_RANGES) -> Portfolio:
    """Draw ``count`` contracts uniformly from the attribute space.

    Account and guarantee values are continuous uniforms, age and maturity are
    uniform integers, withdrawal rate and categorical attributes are uniform
    over their sets. GMDB-only contracts get ``gmwb_value = 0`` and a zero
    withdrawal rate; GMWB contracts get ``gmdb_value = gmwb_value``.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    ranges.validate()
    rng = np.random.default_rng(seed)
    riders = rng.integers(0, len(ranges.riders), size=count)
    genders = rng.integers(0, len(ranges.genders), size=count)
    ages = rng.integers(ranges.age[0], ranges.age[1] + 1, size=count)
    avs = rng.uniform(*ranges.account_value, size=count)
    guarantees = rng.uniform(*ranges.guarantee_value, size=count)
    rates = rng.integers(0, len(ranges.withdrawal_rates), size=count)
    maturities = rng.integers(ranges.maturity[0], ranges.maturity[1] + 1, size=count)
    contracts = tuple(
        make_contract(
            i,
            ranges.riders[riders[i]],
            ranges.genders[genders[i]],
            ages[i],
            avs[i],
            guarantees[i],
            ranges.withdrawal_rates[rates[i]],
            maturities[i],
        )
        for i in range(count)
    )
    return Portfolio(contracts, ranges.declared())


@dataclass(frozen=True)
class GridSpec:
    """Value lists whose Cartesian product forms the representative set.

    Defaults give the standard 1800-contract grid.
    """

    riders: tuple = (Rider.GMDB, Rider.GMDB_GMWB)
    genders: tuple = (Gender.MALE, Gender.FEMALE)
    ages: tuple = (20, 30, 40, 50, 60)
    account_values: tuple = (1e4, 1.25e5, 2.5e5, 3.75e5, 5e5)
    gmdb_values: tuple = (0.5e4, 3e5, 6e5)
    gmwb_values: tuple = (0.5e4, 3e5, 6e5)
    withdrawal_rates: tuple = (0.04, 0.08)
    maturities: tuple = (10, 15, 20, 25)


DEFAULT_GRID = GridSpec()


def generate_representative_grid(spec: GridSpec = DEFAULT_GRID) -> Portfolio:
    """All combinations of the grid lists after rider constraints, deduplicated.

    GMDB-only contracts drop their withdrawal benefit (GW = 0, rate 0); GMWB
    contracts take GD = GW. The first occurrence of each distinct contract is
    kept, in product order of the field declaration.
    """
    lists = (
        spec.riders,
        spec.genders,
        spec.ages,
        spec.account_values,
        spec.gmdb_values,
        spec.gmwb_values,
        spec.withdrawal_rates,
        spec.maturities,
    )
    for values in lists:
        if len(values) == 0:
            raise ValueError("every grid attribute list must be nonempty")
    seen = {}
    for rider, gender, age, av, gd, gw, wr, mat in itertools.product(*lists):
        rider = Rider(rider)
        if rider is Rider.GMDB:
            key = (rider, Gender(gender), int(age), float(av), float(gd), 0.0, 0.0, int(mat))
        else:
            key = (rider, Gender(gender), int(age), float(av), float(gw), float(gw), float(wr), int(mat))
        seen.setdefault(key, None)
    contracts = tuple(VAContract(i, *key) for i, key in enumerate(seen))
    return Portfolio(contracts)


def write_portfolio(p: Portfolio, destination) -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c in p:
            writer.writerow(
                (
                    c.id,
                    c.rider.value,
                    c.gender.value,
                    c.age,
                    repr(c.account_value),
                    repr(c.gmdb_value),
                    repr(c.gmwb_value),
                    repr(c.withdrawal_rate),
                    c.maturity,
                )
            )


def read_portfolio(source) -> Portfolio:
    path = Path(source)
    contracts = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise PortfolioFormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise PortfolioFormatError(
                    f"{path}: row {line_no}: expected {len(CSV_HEADER)} fields, got {len(row)}"
                )
            try:
                rec = dict(zip(CSV_HEADER, (v.strip() for v in row)))
                contracts.append(
                    VAContract(
                        id=int(rec["id"]),
                        rider=Rider(rec["rider"]),
                        gender=Gender(rec["gender"]),
                        age=int(rec["age"]),
                        account_value=float(rec["account_value"]),
                        gmdb_value=float(rec["gmdb_value"]),
                        gmwb_value=float(rec["gmwb_value"]),
                        withdrawal_rate=float(rec["withdrawal_rate"]),
                        maturity=int(rec["maturity"]),
                    )
                )
            except ValueError as exc:
                raise PortfolioFormatError(f"{path}: row {line_no}: {exc}") from exc
    try:
        return Portfolio(tuple(contracts))
    except ContractError as exc:
        raise PortfolioFormatError(f"{path}: {exc}") from exc
