"""Empirical semivariograms of contract deltas and variogram model fitting.

Bin values are semivariances: half the mean squared delta difference of the
pairs falling in each equal-width distance bin. Kriging consumes these
semivariances directly.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .distance import DistanceSpec, distance_matrix

PARAMETRIC_FAMILIES = ("spherical", "exponential", "gaussian")
N_BINS = 20
N_STARTS = 16


@dataclass(frozen=True)
class EmpiricalVariogram:
    bin_edges: np.ndarray
    bin_means: np.ndarray
    bin_counts: np.ndarray
    h_max: float

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def occupied(self) -> np.ndarray:
        return self.bin_counts > 0

    def write_csv(self, destination) -> None:
        with open(destination, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("bin_center", "semivariance", "count"))
            for h, g, n in zip(self.bin_centers, self.bin_means, self.bin_counts):
                w.writerow((repr(float(h)), repr(float(g)), int(n)))


@dataclass(frozen=True)
class VariogramModel:
    family: str
    nugget: float = 0.0
    sill: float = 0.0
    range: float = 1.0
    shape: float | None = None
    poly_coeffs: tuple[float, ...] | None = None
    fit_mse: float | None = None
    status: str = "ok"
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.family not in PARAMETRIC_FAMILIES + ("polynomial",):
            raise ValueError(f"unknown variogram family {self.family!r}")
        if not self.range > 0:
            raise ValueError(f"range must be > 0, got {self.range}")
        if self.family == "polynomial":
            if not self.poly_coeffs:
                raise ValueError("polynomial model needs coefficients")
        else:
            if self.nugget < 0:
                raise ValueError("nugget must be >= 0")
            if self.sill < self.nugget:
                raise ValueError("sill must be >= nugget")
            if self.family != "spherical" and not (self.shape and self.shape > 0):
                raise ValueError(f"{self.family} model needs a positive shape parameter")

    @property
    def label(self) -> str:
        if self.family == "polynomial":
            return f"poly{len(self.poly_coeffs) - 1}"
        return self.family

    def __call__(self, h):
        return evaluate(self, h)


def evaluate(model: VariogramModel, h):
    """Semivariance at lag(s) ``h``; zero at the origin for every family."""
    h = np.asarray(h, dtype=float)
    positive = h > 0
    if model.family == "polynomial":
        hc = np.minimum(h, model.range)
        out = np.polynomial.polynomial.polyval(hc, model.poly_coeffs)
        return np.where(positive, out, 0.0)
    n, ps, r = model.nugget, model.sill - model.nugget, model.range
    if model.family == "spherical":
        x = np.minimum(h / r, 1.0)
        shape = 1.5 * x - 0.5 * x**3
    elif model.family == "exponential":
        shape = -np.expm1(-h / (r * model.shape))
    else:
        shape = -np.expm1(-(h**2) / (r**2 * model.shape))
    return np.where(positive, ps * shape + n, 0.0)


def pair_scatter(contracts, deltas, spec: DistanceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Distance and squared delta difference for every unordered pair (i < j)."""
    deltas = np.asarray(deltas, dtype=float)
    if len(deltas) < 2:
        raise ValueError("need at least 2 points")
    d = distance_matrix(contracts, contracts, spec)
    if d.shape[0] != deltas.shape[0]:
        raise ValueError("contracts and deltas differ in length")
    iu, ju = np.triu_indices(d.shape[0], k=1)
    return d[iu, ju], (deltas[iu] - deltas[ju]) ** 2


def bin_pairs(dist, sqdiff, n_bins: int = N_BINS) -> EmpiricalVariogram:
    dist = np.asarray(dist, dtype=float)
    h_max = float(dist.max())
    if not h_max > 0:
        raise ValueError("all points coincide; cannot bin distances")
    edges = np.linspace(0.0, h_max, n_bins + 1)
    idx = np.minimum((dist / (h_max / n_bins)).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sqdiff, minlength=n_bins)
    means = np.divide(0.5 * sums, counts, out=np.zeros(n_bins), where=counts > 0)
    return EmpiricalVariogram(edges, means, counts, h_max)


def empirical_variogram(contracts, deltas, spec: DistanceSpec, n_bins: int = N_BINS) -> EmpiricalVariogram:
    return bin_pairs(*pair_scatter(contracts, deltas, spec), n_bins=n_bins)


def write_scatter_csv(dist, sqdiff, destination) -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("distance", "squared_difference"))
        for d, s in zip(dist, sqdiff):
            w.writerow((repr(float(d)), repr(float(s))))


def write_models_csv(models: Sequence[VariogramModel], destination) -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("family", "nugget", "sill", "range", "shape", "poly_coeffs", "fit_mse", "status"))
        for m in models:
            coeffs = " ".join(repr(float(c)) for c in m.poly_coeffs) if m.poly_coeffs else ""
            w.writerow(
                (m.label, repr(m.nugget), repr(m.sill), repr(m.range), "" if m.shape is None else repr(m.shape), coeffs, "" if m.fit_mse is None else repr(m.fit_mse), m.status)
            )


def weighted_mse(model: VariogramModel, ev: EmpiricalVariogram) -> float:
    """Count-weighted mean squared error over occupied bins."""
    occ = ev.occupied
    w = ev.bin_counts[occ].astype(float)
    r = evaluate(model, ev.bin_centers[occ]) - ev.bin_means[occ]
    return float(np.sum(w * r * r) / np.sum(w))


# Exponential and Gaussian models depend on range and shape only through
# r*a (resp. r**2*a). The fit works with that scale and reports range as the
# lag where 95% of the partial sill is reached (capped at h_max).
def _model_from_params(family, nugget, psill, scale, h_max):
    if family == "spherical":
        return VariogramModel(family, nugget, nugget + psill, scale)
    if family == "exponential":
        r = min(3.0 * scale, h_max)
        return VariogramModel(family, nugget, nugget + psill, r, shape=scale / r)
    r = min(np.sqrt(3.0 * scale), h_max)
    return VariogramModel(family, nugget, nugget + psill, r, shape=scale / r**2)


def _profile(family, h, scale):
    if family == "spherical":
        x = np.minimum(h / scale, 1.0)
        return 1.5 * x - 0.5 * x**3
    if family == "exponential":
        return -np.expm1(-h / scale)
    return -np.expm1(-(h**2) / scale)


def fit_parametric(ev: EmpiricalVariogram, family: str, nugget: float | None = None) -> VariogramModel:
    """Count-weighted least-squares fit of a parametric variogram family.

    Runs a bounded local solver from ``N_STARTS`` deterministic starting
    points and keeps the best. Passing ``nugget`` pins it to that value.
    """
    if family not in PARAMETRIC_FAMILIES:
        raise ValueError(f"unknown parametric family {family!r}")
    occ = ev.occupied
    if occ.sum() < 3:
        raise ValueError("need at least 3 occupied bins to fit a parametric variogram")
    h = ev.bin_centers[occ]
    g = ev.bin_means[occ]
    sw = np.sqrt(ev.bin_counts[occ].astype(float))
    h_max = ev.h_max
    g_top = max(float(g.max()), 1e-300)

    if family == "spherical":
        scale_bounds = (h_max * 1e-6, h_max)
        scale_starts = h_max * np.array([0.1, 0.35, 0.6, 0.9])
    elif family == "exponential":
        scale_bounds = (h_max * 1e-6, h_max / 3.0 * 1e3)
        scale_starts = h_max * np.array([0.03, 0.1, 0.3, 1.0])
    else:
        scale_bounds = (h_max**2 * 1e-8, h_max**2 / 3.0 * 1e3)
        scale_starts = h_max**2 * np.array([0.003, 0.03, 0.1, 0.5])

    fixed = nugget is not None

    def unpack(p):
        if fixed:
            return nugget, p[0], p[1]
        return p[0], p[1], p[2]

    def resid(p):
        n, ps, s = unpack(p)
        return sw * (n + ps * _profile(family, h, s) - g)

    lo = [0.0, scale_bounds[0]]
    hi = [np.inf, scale_bounds[1]]
    if not fixed:
        lo, hi = [0.0] + lo, [np.inf] + hi

    best = None
    for s0 in scale_starts:
        for n_frac, ps_frac in ((0.0, 1.0), (0.3, 0.7), (0.1, 1.2), (0.5, 0.5)):
            if fixed:
                x0 = [max(ps_frac * g_top, 1e-12), s0]
            else:
                x0 = [n_frac * g_top, max(ps_frac * g_top, 1e-12), s0]
            x0 = np.clip(x0, lo, np.minimum(hi, np.finfo(float).max))
            res = least_squares(resid, x0, bounds=(lo, hi), method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            if best is None or res.cost < best.cost:
                best = res
    n, ps, s = unpack(best.x)
    model = _model_from_params(family, float(n), float(ps), float(s), h_max)
    status = "ok" if best.status > 0 else "warning"
    notes = () if status == "ok" else (f"optimizer did not converge: {best.message}",)
    if status != "ok":
        warnings.warn(f"{family} variogram fit: {best.message}", RuntimeWarning, stacklevel=2)
    return _finish(model, ev, status, notes)


def _finish(model, ev, status, notes):
    return replace(model, fit_mse=weighted_mse(model, ev), status=status, warnings=tuple(notes))


def fit_polynomial(ev: EmpiricalVariogram, degree: int, range_: float) -> VariogramModel:
    """Least-squares polynomial through the bins whose centers lie in [0, range_].

    Beyond ``range_`` the model holds the polynomial's value at ``range_``.
    Negative values inside the range are kept and reported as a warning.
    """
    if degree not in (1, 2, 3, 4):
        raise ValueError(f"degree must be 1..4, got {degree}")
    if not range_ > 0:
        raise ValueError("range must be > 0")
    mask = ev.occupied & (ev.bin_centers <= range_)
    if mask.sum() < degree + 1:
        raise ValueError(f"need {degree + 1} occupied bins within range, got {int(mask.sum())}")
    h = ev.bin_centers[mask]
    vander = np.vander(h, degree + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(vander, ev.bin_means[mask], rcond=None)
    model = VariogramModel("polynomial", range=float(range_), poly_coeffs=tuple(float(c) for c in coeffs))
    notes = []
    grid = np.linspace(0.0, range_, 401)[1:]
    if np.any(evaluate(model, grid) < 0):
        notes.append("polynomial variogram takes negative values")
    return _finish(model, ev, "warning" if notes else "ok", notes)


def fit_family(ev: EmpiricalVariogram, name: str, poly_range: float | None = None, nugget: float | None = None) -> VariogramModel:
    """Fit by label: a parametric family name or ``poly1`` .. ``poly4``."""
    if name in PARAMETRIC_FAMILIES:
        return fit_parametric(ev, name, nugget=nugget)
    if name.startswith("poly"):
        if poly_range is None:
            poly_range = fit_parametric(ev, "spherical").range
        return fit_polynomial(ev, int(name[4:]), poly_range)
    raise ValueError(f"unknown variogram model {name!r}")
