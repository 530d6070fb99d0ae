"""Distance functions over mixed categorical/numeric contract attributes.

Two functions are provided:

* k-prototype: range-normalized Euclidean distance over
  ``NUMERIC_ATTRIBUTES`` plus ``gamma`` times the number of mismatched
  categorical attributes, under a square root.
* rate-adjusted: weights age, maturity and withdrawal rate by
  ``exp(-AV/GD)`` so contracts whose guarantee is far out of the money are
  all close to each other, and scales the age term by
  ``exp((age_x + age_y)/2 - max_age)`` to stress older policyholders.

Withdrawal rate enters as 0 for contracts without a GMWB rider.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _backend
from .portfolio import NUMERIC_ATTRIBUTES, DEFAULT_RANGES, ContractArrays, Portfolio, VAContract, to_arrays


class DistanceKind(str, enum.Enum):
    KPROTOTYPE = "kprototype"
    RATE_ADJUSTED = "rate_adjusted"


@dataclass(frozen=True)
class DistanceSpec:
    kind: DistanceKind = DistanceKind.KPROTOTYPE
    category_weight: float = 1.0
    ranges: Mapping[str, tuple[float, float]] = field(default_factory=DEFAULT_RANGES.declared)
    max_age: float = 60

    def __post_init__(self):
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        if self.category_weight < 0:
            raise ValueError(f"category_weight must be >= 0, got {self.category_weight}")
        if self.kind is DistanceKind.KPROTOTYPE:
            for name in NUMERIC_ATTRIBUTES:
                if name not in self.ranges:
                    raise ValueError(f"missing normalization range for {name}")
                lo, hi = self.ranges[name]
                if not hi > lo:
                    raise ValueError(f"range for {name} must have max > min, got ({lo}, {hi})")

    @property
    def inverse_widths(self) -> np.ndarray:
        return np.array([1.0 / (self.ranges[n][1] - self.ranges[n][0]) for n in NUMERIC_ATTRIBUTES])


def _numeric(c: VAContract):
    return (
        c.account_value,
        c.gmdb_value,
        c.gmwb_value,
        c.maturity,
        c.age,
        c.effective_withdrawal_rate,
    )


def _mismatches(x: VAContract, y: VAContract) -> int:
    return int(x.gender != y.gender) + int(x.rider != y.rider)


def kprototype_distance(x: VAContract, y: VAContract, spec: DistanceSpec) -> float:
    if spec.kind is not DistanceKind.KPROTOTYPE:
        raise ValueError("spec.kind must be kprototype")
    total = 0.0
    for name, a, b in zip(NUMERIC_ATTRIBUTES, _numeric(x), _numeric(y)):
        lo, hi = spec.ranges[name]
        total += ((a - b) / (hi - lo)) ** 2
    return math.sqrt(total + spec.category_weight * _mismatches(x, y))


def _moneyness(c: VAContract) -> float:
    if not c.gmdb_value > 0:
        raise ValueError(f"contract {c.id}: moneyness AV/GD undefined for GD = {c.gmdb_value}")
    return c.account_value / c.gmdb_value


def rate_adjusted_distance(x: VAContract, y: VAContract, spec: DistanceSpec) -> float:
    if spec.kind is not DistanceKind.RATE_ADJUSTED:
        raise ValueError("spec.kind must be rate_adjusted")
    if max(x.age, y.age) > spec.max_age:
        raise ValueError(f"max_age {spec.max_age} below contract age")
    ex, ey = math.exp(-_moneyness(x)), math.exp(-_moneyness(y))

    def g(a, b):
        return (ex * a - ey * b) ** 2

    f = math.exp((x.age + y.age) / 2 - spec.max_age)
    total = f * g(x.age, y.age)
    total += g(x.maturity, y.maturity)
    total += g(x.effective_withdrawal_rate, y.effective_withdrawal_rate)
    return math.sqrt(total + spec.category_weight * _mismatches(x, y))


def distance(x: VAContract, y: VAContract, spec: DistanceSpec) -> float:
    if spec.kind is DistanceKind.KPROTOTYPE:
        return kprototype_distance(x, y, spec)
    return rate_adjusted_distance(x, y, spec)


def as_arrays(contracts) -> ContractArrays:
    if isinstance(contracts, ContractArrays):
        return contracts
    if isinstance(contracts, Portfolio):
        return contracts.arrays
    return to_arrays(list(contracts))


def _rate_features(a: ContractArrays):
    av = a.column("account_value")
    gd = a.column("gmdb_value")
    if np.any(gd <= 0):
        bad = a.ids[np.argmax(gd <= 0)]
        raise ValueError(f"contract {bad}: moneyness AV/GD undefined for GD = 0")
    e = np.exp(-av / gd)
    age = np.ascontiguousarray(a.column("age"))
    feats = np.column_stack((e * age, e * a.column("maturity"), e * a.column("withdrawal_rate")))
    return np.ascontiguousarray(feats), age


def distance_matrix(xs, ys, spec: DistanceSpec) -> np.ndarray:
    """Distances between every contract of ``xs`` (rows) and ``ys`` (columns)."""
    a, b = as_arrays(xs), as_arrays(ys)
    ca = np.ascontiguousarray(a.categorical, dtype=np.int64)
    cb = np.ascontiguousarray(b.categorical, dtype=np.int64)
    if spec.kind is DistanceKind.KPROTOTYPE:
        w = spec.inverse_widths
        return _backend.kprototype_cross(
            np.ascontiguousarray(a.numeric * w),
            ca,
            np.ascontiguousarray(b.numeric * w),
            cb,
            float(spec.category_weight),
        )
    fa, age_a = _rate_features(a)
    fb, age_b = _rate_features(b)
    if max(age_a.max(initial=0), age_b.max(initial=0)) > spec.max_age:
        raise ValueError(f"max_age {spec.max_age} below contract age")
    return _backend.rate_adjusted_cross(fa, age_a, ca, fb, age_b, cb, float(spec.max_age), float(spec.category_weight))


def max_age_of(*groups: Sequence[VAContract]) -> int:
    return int(max(c.age for g in groups for c in g))
