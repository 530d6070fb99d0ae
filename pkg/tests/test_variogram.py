import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vam.distance import DistanceSpec, distance
from vam.portfolio import generate_random_portfolio
from vam.variogram import (
    N_BINS,
    EmpiricalVariogram,
    VariogramModel,
    bin_pairs,
    empirical_variogram,
    evaluate,
    fit_family,
    fit_parametric,
    fit_polynomial,
    pair_scatter,
    weighted_mse,
    write_models_csv,
    write_scatter_csv,
)

EDGES = np.linspace(0.0, 1.0, N_BINS + 1)
CENTERS = 0.5 * (EDGES[1:] + EDGES[:-1])


def synthetic(model, counts=None):
    counts = np.full(N_BINS, 50) if counts is None else np.asarray(counts)
    means = np.where(counts > 0, evaluate(model, CENTERS), 0.0)
    return EmpiricalVariogram(EDGES, means, counts, 1.0)


class TestModels:
    def test_spherical_value(self):
        assert float(evaluate(VariogramModel("spherical", 0.0, 1.0, 2.0), 1.0)) == 0.6875

    def test_spherical_flat_beyond_range(self):
        m = VariogramModel("spherical", 0.2, 1.5, 0.4)
        np.testing.assert_array_equal(evaluate(m, [0.4, 0.7, 9.0]), 1.5)

    def test_zero_at_origin_despite_nugget(self):
        for m in (
            VariogramModel("spherical", 0.3, 1.0, 1.0),
            VariogramModel("exponential", 0.3, 1.0, 1.0, shape=1 / 3),
            VariogramModel("gaussian", 0.3, 1.0, 1.0, shape=1 / 3),
            VariogramModel("polynomial", range=1.0, poly_coeffs=(0.3, 1.0)),
        ):
            assert float(m(0.0)) == 0.0

    def test_exponential_value(self):
        m = VariogramModel("exponential", 0.0, 10.0, 1.0, shape=1.0)
        assert float(m(1.0)) == pytest.approx(3.6787944117144233 * (math.e - 1), rel=1e-14)

    def test_gaussian_value(self):
        m = VariogramModel("gaussian", 1.0, 3.0, 2.0, shape=0.25)
        assert float(m(1.0)) == pytest.approx(1.0 + 2.0 * (1 - math.exp(-1.0)), rel=1e-14)

    def test_polynomial_held_beyond_range(self):
        m = VariogramModel("polynomial", range=0.5, poly_coeffs=(0.0, 2.0, -1.0))
        assert float(m(0.25)) == pytest.approx(0.4375)
        assert float(m(0.9)) == float(m(0.5)) == pytest.approx(0.75)
        assert m.label == "poly2"

    @pytest.mark.parametrize(
        "kw",
        [
            dict(family="cubic"),
            dict(family="spherical", range=0.0),
            dict(family="spherical", nugget=-1.0, sill=1.0),
            dict(family="spherical", nugget=2.0, sill=1.0),
            dict(family="exponential", sill=1.0),
            dict(family="polynomial"),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            VariogramModel(**kw)


def brute_force_bins(contracts, z, spec, n_bins=N_BINS):
    pairs = [(distance(contracts[i], contracts[j], spec), (z[i] - z[j]) ** 2) for i in range(len(z)) for j in range(i + 1, len(z))]
    h_max = max(d for d, _ in pairs)
    width = h_max / n_bins
    sums, counts = [0.0] * n_bins, [0] * n_bins
    for d, s in pairs:
        k = min(int(d / width), n_bins - 1)
        sums[k] += s
        counts[k] += 1
    return [0.5 * s / n if n else 0.0 for s, n in zip(sums, counts)], counts


class TestEmpirical:
    @pytest.mark.parametrize("n", [2, 3, 7, 20])
    def test_brute_force(self, n):
        rng = np.random.default_rng(n)
        contracts = generate_random_portfolio(n, seed=n)
        z = rng.normal(size=n)
        ev = empirical_variogram(contracts, z, DistanceSpec())
        means, counts = brute_force_bins(contracts, z, DistanceSpec())
        np.testing.assert_array_equal(ev.bin_counts, counts)
        np.testing.assert_allclose(ev.bin_means, means, rtol=0, atol=1e-10)
        assert ev.bin_counts.sum() == n * (n - 1) // 2

    def test_pair_at_h_max_goes_in_last_bin(self):
        ev = bin_pairs([0.0, 0.5, 1.0], [2.0, 4.0, 6.0], n_bins=4)
        np.testing.assert_array_equal(ev.bin_counts, [1, 0, 1, 1])
        np.testing.assert_array_equal(ev.bin_means, [1.0, 0.0, 2.0, 3.0])

    def test_coincident_points(self):
        with pytest.raises(ValueError, match="coincide"):
            bin_pairs([0.0, 0.0], [1.0, 2.0])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            pair_scatter(generate_random_portfolio(1, seed=1), [0.0], DistanceSpec())

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            pair_scatter(generate_random_portfolio(3, seed=1), [0.0, 1.0], DistanceSpec())

    def test_exports(self, tmp_path):
        contracts = generate_random_portfolio(6, seed=3)
        z = np.arange(6.0)
        d, s = pair_scatter(contracts, z, DistanceSpec())
        write_scatter_csv(d, s, tmp_path / "s.csv")
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert rows[0] == ["distance", "squared_difference"] and len(rows) == 16
        ev = bin_pairs(d, s)
        ev.write_csv(tmp_path / "b.csv")
        rows = list(csv.DictReader(open(tmp_path / "b.csv")))
        assert len(rows) == N_BINS
        assert sum(int(r["count"]) for r in rows) == 15


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 20), seed=st.integers(0, 2**32 - 1), gamma=st.sampled_from([0.05, 1.0]))
def test_empirical_matches_brute_force(n, seed, gamma):
    contracts = generate_random_portfolio(n, seed=seed)
    z = np.random.default_rng(seed).uniform(-1, 1, size=n)
    spec = DistanceSpec(category_weight=gamma)
    ev = empirical_variogram(contracts, z, spec)
    means, counts = brute_force_bins(contracts, z, spec)
    np.testing.assert_array_equal(ev.bin_counts, counts)
    np.testing.assert_allclose(ev.bin_means, means, rtol=0, atol=1e-10)


class TestParametricFit:
    @pytest.mark.parametrize("nugget, sill, rng", [(0.1, 1.0, 0.6), (0.0, 2.5, 0.35), (0.3, 0.5, 0.95)])
    def test_noiseless_spherical_recovery(self, nugget, sill, rng):
        fit = fit_parametric(synthetic(VariogramModel("spherical", nugget, sill, rng)), "spherical")
        assert fit.nugget == pytest.approx(nugget, abs=1e-6)
        assert fit.sill == pytest.approx(sill, abs=1e-6)
        assert fit.range == pytest.approx(rng, abs=1e-6)
        assert fit.status == "ok" and fit.fit_mse < 1e-20

    @pytest.mark.parametrize("family", ["exponential", "gaussian"])
    def test_noiseless_curve_recovery(self, family):
        truth = VariogramModel(family, 0.05, 1.0, 0.5, shape=1 / 3)
        fit = fit_parametric(synthetic(truth), family)
        np.testing.assert_allclose(evaluate(fit, CENTERS), evaluate(truth, CENTERS), rtol=1e-6)
        assert fit.range == pytest.approx(0.5, rel=1e-6)

    def test_pinned_nugget(self):
        truth = VariogramModel("spherical", 0.2, 1.0, 0.5)
        fit = fit_parametric(synthetic(truth), "spherical", nugget=0.0)
        assert fit.nugget == 0.0
        assert fit.fit_mse > 0

    def test_empty_bins_ignored(self):
        counts = np.full(N_BINS, 40)
        counts[[3, 7, 8]] = 0
        fit = fit_parametric(synthetic(VariogramModel("spherical", 0.0, 1.0, 0.6), counts), "spherical")
        assert fit.range == pytest.approx(0.6, abs=1e-6)

    def test_too_few_bins(self):
        counts = np.zeros(N_BINS, dtype=int)
        counts[:2] = 5
        with pytest.raises(ValueError, match="3 occupied"):
            fit_parametric(synthetic(VariogramModel("spherical", 0.0, 1.0, 0.6), counts), "spherical")

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            fit_family(synthetic(VariogramModel("spherical", 0.0, 1.0, 0.6)), "matern")


class TestPolynomialFit:
    def test_exact_quadratic(self):
        truth = VariogramModel("polynomial", range=0.6, poly_coeffs=(0.1, 2.0, -1.5))
        fit = fit_polynomial(synthetic(truth), 2, 0.6)
        np.testing.assert_allclose(fit.poly_coeffs, truth.poly_coeffs, atol=1e-10)
        assert fit.status == "ok"

    def test_uses_only_bins_within_range(self):
        ev = synthetic(VariogramModel("spherical", 0.0, 1.0, 0.5))
        fit = fit_polynomial(ev, 1, 0.3)
        mask = CENTERS <= 0.3
        coeffs = np.polynomial.polynomial.polyfit(CENTERS[mask], ev.bin_means[mask], 1)
        np.testing.assert_allclose(fit.poly_coeffs, coeffs, rtol=1e-10)

    def test_negative_values_flagged(self):
        truth = VariogramModel("polynomial", range=1.0, poly_coeffs=(-0.2, 1.0))
        fit = fit_polynomial(synthetic(truth), 1, 1.0)
        assert fit.status == "warning"
        assert "negative" in fit.warnings[0]

    @pytest.mark.parametrize("degree, rng", [(0, 0.5), (5, 0.5), (2, 0.0), (4, 0.1)])
    def test_invalid(self, degree, rng):
        with pytest.raises(ValueError):
            fit_polynomial(synthetic(VariogramModel("spherical", 0.0, 1.0, 0.5)), degree, rng)

    def test_default_range_from_spherical(self):
        ev = synthetic(VariogramModel("spherical", 0.0, 1.0, 0.45))
        assert fit_family(ev, "poly3").range == pytest.approx(0.45, abs=1e-6)


def test_weighted_mse_and_models_csv(tmp_path):
    ev = EmpiricalVariogram(EDGES, np.ones(N_BINS), np.r_[np.full(10, 3), np.full(10, 1)], 1.0)
    m = VariogramModel("spherical", 0.0, 2.0, 1e-3)
    # model is 2 everywhere on occupied bins, data is 1
    assert weighted_mse(m, ev) == pytest.approx(1.0)
    write_models_csv([m, VariogramModel("polynomial", range=1.0, poly_coeffs=(0.0, 1.0))], tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert [r["family"] for r in rows] == ["spherical", "poly1"]
    assert rows[1]["poly_coeffs"] == "0.0 1.0"
