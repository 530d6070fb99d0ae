"""Ordinary Kriging, inverse distance weighting and radial basis functions.

All three estimators interpolate Monte Carlo deltas of representative
contracts to arbitrary target contracts through a :class:`DistanceSpec`.
Targets are processed in column blocks so an n x N distance matrix is never
materialized in full.
"""
from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as spl
from scipy.linalg import lapack

from .distance import DistanceSpec, as_arrays, distance_matrix
from .portfolio import ContractArrays
from .variogram import VariogramModel, evaluate

COND_LIMIT = 1e12
BLOCK = 2048


class SingularSystemError(np.linalg.LinAlgError):
    """Interpolation system is singular or too ill-conditioned to trust."""

    def __init__(self, message, label=None, condition=None):
        super().__init__(message)
        self.label = label
        self.condition = condition


class Granularity(str, enum.Enum):
    PORTFOLIO = "portfolio"
    PER_POLICY = "per_policy"


@dataclass
class Factorization:
    lu: tuple
    condition: float

    def solve(self, rhs):
        return spl.lu_solve(self.lu, rhs, check_finite=False)


def factorize(matrix: np.ndarray, label: str) -> Factorization:
    """LU with partial pivoting plus a 1-norm condition estimate."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", spl.LinAlgWarning)
        try:
            lu, piv = spl.lu_factor(matrix, check_finite=True)
        except (spl.LinAlgWarning, ValueError) as exc:
            raise SingularSystemError(f"{label}: singular system ({exc})", label, np.inf) from exc
    anorm = np.linalg.norm(matrix, 1)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    condition = np.inf if rcond == 0 else 1.0 / rcond
    if info != 0 or not condition <= COND_LIMIT:
        raise SingularSystemError(
            f"{label}: condition estimate {condition:.3g} exceeds {COND_LIMIT:.0e}", label, condition
        )
    return Factorization((lu, piv), condition)


@dataclass
class SampleSet:
    """Representative contracts, their deltas and the distance used between them."""

    contracts: object
    values: np.ndarray
    spec: DistanceSpec
    arrays: ContractArrays = field(init=False)

    def __post_init__(self):
        self.arrays = as_arrays(self.contracts)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.arrays) < 1 or self.values.shape != (len(self.arrays),):
            raise ValueError("sample needs n >= 1 locations with one value each")

    def __len__(self):
        return len(self.arrays)

    def distances(self) -> np.ndarray:
        if not hasattr(self, "_dist"):
            self._dist = distance_matrix(self.arrays, self.arrays, self.spec)
        return self._dist

    def take(self, index) -> "SampleSet":
        return SampleSet(self.arrays.take(index), self.values[index], self.spec)

    def check_distinct(self, label: str) -> None:
        """Reject coincident locations; they make exact interpolation singular."""
        d = self.distances()
        iu, ju = np.nonzero(np.triu(d == 0, k=1))
        if iu.size:
            raise SingularSystemError(
                f"{label}: {iu.size} pairs of sample locations at zero distance "
                f"(e.g. ids {self.arrays.ids[iu[0]]} and {self.arrays.ids[ju[0]]})",
                label,
                np.inf,
            )


def _blocks(n, size=BLOCK):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


class OrdinaryKriging:
    """Ordinary Kriging on a fixed sample with a fixed variogram.

    The bordered semivariance matrix is factorized once. Per-policy estimates
    reuse the factorization for every target unless ``refactor_per_policy`` is
    set, which re-factorizes for each target the way a naive per-policy solve
    would.
    """

    def __init__(self, sample: SampleSet, model: VariogramModel, refactor_per_policy: bool = False):
        self.sample = sample
        self.model = model
        self.refactor_per_policy = refactor_per_policy
        self.label = f"kriging ({model.label})"
        n = len(sample)
        if n > 1:
            sample.check_distinct(self.label)
        gam = evaluate(model, sample.distances())
        # weights are invariant to scaling the semivariances; scaling keeps
        # the condition estimate meaningful when deltas are small numbers
        self.scale = float(np.max(np.abs(gam))) if n > 1 and np.any(gam) else 1.0
        a = np.ones((n + 1, n + 1))
        a[:n, :n] = gam / self.scale
        a[n, n] = 0.0
        self.matrix = a
        self.factor = factorize(a, self.label)

    def _rhs(self, targets: ContractArrays) -> np.ndarray:
        d = distance_matrix(self.sample.arrays, targets, self.sample.spec)
        rhs = np.ones((d.shape[0] + 1, d.shape[1]))
        rhs[:-1] = evaluate(self.model, d) / self.scale
        return rhs

    def weights(self, targets) -> tuple[np.ndarray, np.ndarray]:
        """Kriging weights (n, N) and Lagrange multipliers (N,) for each target."""
        sol = self.factor.solve(self._rhs(as_arrays(targets)))
        return sol[:-1], sol[-1] * self.scale

    def predict(self, targets) -> np.ndarray:
        """Per-policy delta estimates."""
        t = as_arrays(targets)
        out = np.empty(len(t))
        z = self.sample.values
        for sl in _blocks(len(t)):
            rhs = self._rhs(t.take(sl))
            if self.refactor_per_policy:
                sol = np.empty_like(rhs)
                for j in range(rhs.shape[1]):
                    sol[:, j] = factorize(self.matrix, self.label).solve(rhs[:, j])
            else:
                sol = self.factor.solve(rhs)
            out[sl] = z @ sol[:-1]
        return out

    def portfolio(self, targets) -> float:
        """Portfolio delta from one solve with summed right-hand sides."""
        t = as_arrays(targets)
        n = len(self.sample)
        rhs = np.zeros(n + 1)
        for sl in _blocks(len(t)):
            rhs[:n] += evaluate(self.model, distance_matrix(self.sample.arrays, t.take(sl), self.sample.spec)).sum(axis=1)
        rhs[:n] /= self.scale
        rhs[n] = len(t)
        w = self.factor.solve(rhs)[:n]
        return float(self.sample.values @ w)


def idw_weights_estimate(dist: np.ndarray, values: np.ndarray, power: float) -> np.ndarray:
    """IDW estimates for each column of a (n, N) distance block."""
    n, m = dist.shape
    out = np.empty(m)
    zero = dist == 0
    hit = zero.any(axis=0)
    if hit.any():
        out[hit] = values[np.argmax(zero[:, hit], axis=0)]
    miss = ~hit
    if miss.any():
        # log-space weights: D**-p overflows for large p
        logw = -power * np.log(dist[:, miss])
        logw -= logw.max(axis=0)
        w = np.exp(logw)
        out[miss] = (values @ w) / w.sum(axis=0)
    return out


class InverseDistance:
    def __init__(self, sample: SampleSet, power: float):
        if not power > 0:
            raise ValueError(f"power must be > 0, got {power}")
        self.sample = sample
        self.power = float(power)
        self.label = f"idw (p = {power:g})"

    def predict(self, targets) -> np.ndarray:
        t = as_arrays(targets)
        out = np.empty(len(t))
        for sl in _blocks(len(t)):
            d = distance_matrix(self.sample.arrays, t.take(sl), self.sample.spec)
            out[sl] = idw_weights_estimate(d, self.sample.values, self.power)
        return out


def rbf_kernel(kind: str, epsilon: float, d):
    d = np.asarray(d, dtype=float)
    if kind == "gaussian":
        return np.exp(-epsilon * d * d)
    if kind == "multiquadric":
        return np.sqrt(1.0 + (epsilon * d) ** 2)
    raise ValueError(f"unknown RBF kernel {kind!r}")


@dataclass
class RBFWeights:
    kernel: str
    epsilon: float
    weights: np.ndarray
    condition: float


def rbf_fit(sample: SampleSet, kernel: str, epsilon: float) -> RBFWeights:
    """Weights making the RBF expansion exact at the sample locations."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    label = f"rbf ({kernel}, eps = {epsilon:g})"
    if len(sample) > 1:
        sample.check_distinct(label)
    phi = rbf_kernel(kernel, epsilon, sample.distances())
    fac = factorize(phi, label)
    w = fac.solve(sample.values)
    z = sample.values
    resid = np.linalg.norm(phi @ w - z)
    if resid > 1e-8 * max(np.linalg.norm(z), np.finfo(float).tiny):
        raise SingularSystemError(f"{label}: residual {resid:.3g} too large", label, fac.condition)
    return RBFWeights(kernel, float(epsilon), w, fac.condition)


class RadialBasis:
    def __init__(self, sample: SampleSet, kernel: str, epsilon: float):
        self.sample = sample
        self.fit = rbf_fit(sample, kernel, epsilon)
        self.label = f"rbf ({kernel}, eps = {epsilon:g})"

    def predict(self, targets) -> np.ndarray:
        t = as_arrays(targets)
        out = np.empty(len(t))
        for sl in _blocks(len(t)):
            d = distance_matrix(t.take(sl), self.sample.arrays, self.sample.spec)
            out[sl] = rbf_kernel(self.fit.kernel, self.fit.epsilon, d) @ self.fit.weights
        return out


def krige_policy(sample: SampleSet, model: VariogramModel, target) -> float:
    return float(OrdinaryKriging(sample, model).predict([target])[0])


def krige_portfolio(sample: SampleSet, model: VariogramModel, portfolio) -> float:
    return OrdinaryKriging(sample, model).portfolio(portfolio)


def idw_estimate(sample: SampleSet, power: float, targets) -> np.ndarray:
    return InverseDistance(sample, power).predict(targets)


def rbf_estimate(weights: RBFWeights, sample: SampleSet, targets) -> np.ndarray:
    t = as_arrays(targets)
    d = distance_matrix(t, sample.arrays, sample.spec)
    return rbf_kernel(weights.kernel, weights.epsilon, d) @ weights.weights


@dataclass(frozen=True)
class Method:
    """One interpolation method with its free parameters."""

    kind: str
    variogram: str = "spherical"
    power: float = 1.0
    kernel: str = "gaussian"
    epsilon: float = 1.0

    def __post_init__(self):
        if self.kind not in ("kriging", "idw", "rbf"):
            raise ValueError(f"unknown method kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "kriging":
            return f"Kriging ({self.variogram})"
        if self.kind == "idw":
            return f"IDW (p = {self.power:g})"
        return f"RBF ({self.kernel}, eps = {self.epsilon:g})"

    def to_dict(self) -> dict:
        if self.kind == "kriging":
            return {"kind": "kriging", "variogram": self.variogram}
        if self.kind == "idw":
            return {"kind": "idw", "power": self.power}
        return {"kind": "rbf", "kernel": self.kernel, "epsilon": self.epsilon}


DEFAULT_METHODS = (
    Method("kriging", variogram="spherical"),
    Method("kriging", variogram="exponential"),
    Method("kriging", variogram="gaussian"),
    Method("idw", power=1),
    Method("idw", power=10),
    Method("idw", power=100),
    Method("rbf", kernel="gaussian", epsilon=1),
    Method("rbf", kernel="gaussian", epsilon=10),
    Method("rbf", kernel="multiquadric", epsilon=1),
    Method("rbf", kernel="multiquadric", epsilon=10),
)


@dataclass
class EstimateReport:
    label: str
    granularity: Granularity
    portfolio_delta: float
    per_policy: np.ndarray | None
    elapsed: float


def build_estimator(method: Method, sample: SampleSet, model: VariogramModel | None = None, refactor_per_policy: bool = False):
    if method.kind == "kriging":
        if model is None:
            raise ValueError("Kriging needs a fitted variogram model")
        return OrdinaryKriging(sample, model, refactor_per_policy=refactor_per_policy)
    if method.kind == "idw":
        return InverseDistance(sample, method.power)
    return RadialBasis(sample, method.kernel, method.epsilon)


def estimate_portfolio(
    method: Method,
    sample: SampleSet,
    portfolio,
    granularity: Granularity = Granularity.PORTFOLIO,
    model: VariogramModel | None = None,
    refactor_per_policy: bool = False,
) -> EstimateReport:
    """Portfolio delta (and per-policy deltas on request) with wall-clock time.

    Only Kriging has a cheaper portfolio-only path; IDW and RBF always sum
    per-policy estimates. Raises :class:`SingularSystemError` on failure.
    """
    granularity = Granularity(granularity)
    start = time.perf_counter()
    targets = as_arrays(portfolio)
    if len(targets) == 0:
        return EstimateReport(method.label, granularity, 0.0, np.empty(0) if granularity is Granularity.PER_POLICY else None, time.perf_counter() - start)
    est = build_estimator(method, sample, model, refactor_per_policy)
    if method.kind == "kriging" and granularity is Granularity.PORTFOLIO:
        total, per = est.portfolio(targets), None
    else:
        per = est.predict(targets)
        total = float(np.sum(per))
        if granularity is Granularity.PORTFOLIO:
            per = None
    return EstimateReport(method.label, granularity, total, per, time.perf_counter() - start)
