"""Tests for the closed-form reference models, coverage validation and the
two-Gaussian sigmoid demonstration."""

import math

import numpy as np
import pytest

from epimap.exceptions import ConfigError, DomainError, EndpointError
from epimap.likelihood import jeffreys_density, mapped_density, z_of_theta
from epimap.refmodels import (
    BinomialFamily,
    BinomialModel,
    GaussianFamily,
    TwoGaussianScene,
    VarianceFamily,
    VarianceModel,
    binomial_z,
    coverage_mc,
    two_gaussian_curve,
    variance_z,
)


class TestVarianceModel:
    def test_z_at_mle(self):
        assert variance_z(VarianceModel(4), 1.0) == 0.0

    def test_formula_n4_v2(self):
        got = variance_z(VarianceModel(4), 2.0)
        assert got == pytest.approx(
            2.0 * math.sqrt(math.log(2.0) + 0.5 - 1.0), abs=1e-12
        )
        assert got == pytest.approx(0.8790, abs=1e-4)

    def test_formula_n2_quarter(self):
        got = variance_z(VarianceModel(2), 0.25)
        assert got == pytest.approx(
            -math.sqrt(2.0) * math.sqrt(math.log(0.25) + 4.0 - 1.0), abs=1e-12
        )
        assert got == pytest.approx(-1.7965, abs=1e-4)

    def test_agrees_with_generic_transform(self):
        model = VarianceModel(3)
        like = model.as_likelihood()
        for v in np.linspace(0.1, 6.0, 40):
            assert variance_z(model, v) == pytest.approx(
                z_of_theta(like, v), abs=1e-9
            )

    def test_nll2_nonnegative(self):
        model = VarianceModel(5, v_hat=2.0)
        for v in np.geomspace(0.01, 50.0, 60):
            assert model.nll2(v) >= 0.0

    def test_scale_invariance(self):
        """Curves for v_hat=c are the v_hat=1 curves stretched by c."""
        c = 2.5
        grid1 = np.linspace(0.05, 6.0, 800)
        base = mapped_density(VarianceModel(3, 1.0).as_likelihood(), grid1)
        scaled = mapped_density(
            VarianceModel(3, c).as_likelihood(), grid1 * c
        )
        np.testing.assert_allclose(scaled.density * c, base.density, rtol=1e-6)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            variance_z(VarianceModel(4), 0.0)


class TestBinomialModel:
    def test_z_at_mle(self):
        assert binomial_z(BinomialModel(8, 10), 0.8) == 0.0

    def test_formula_8_of_10(self):
        got = binomial_z(BinomialModel(8, 10), 0.5)
        ratio = 10 * math.log(0.5) - 8 * math.log(0.8) - 2 * math.log(0.2)
        assert got == pytest.approx(-math.sqrt(-2.0 * ratio), abs=1e-12)
        assert got == pytest.approx(-1.9634, abs=1e-4)

    def test_formula_all_successes(self):
        """L(p) = p^2 with L(p_hat) = 1 at the endpoint MLE."""
        got = binomial_z(BinomialModel(2, 2), 0.5)
        assert got == pytest.approx(-math.sqrt(-2.0 * math.log(0.25)), abs=1e-12)
        assert got == pytest.approx(-1.6651, abs=1e-4)

    def test_agrees_with_generic_transform(self):
        model = BinomialModel(3, 12)
        like = model.as_likelihood()
        for p in np.linspace(0.02, 0.98, 40):
            assert binomial_z(model, p) == pytest.approx(
                z_of_theta(like, p), abs=1e-9
            )

    def test_endpoint_error(self):
        with pytest.raises(EndpointError):
            binomial_z(BinomialModel(8, 10), 1.0)

    def test_mle_is_maximum(self):
        model = BinomialModel(7, 9)
        base = model.nll2(model.p_hat)
        for p in np.linspace(0.01, 0.99, 60):
            assert model.nll2(p) >= base


class TestCurveAgreement:
    def test_frequentist_close_to_jeffreys_general(self):
        """For 8/10 successes the two normalized curves differ by well
        under 15% of peak height; bound frozen from a 20001-point
        quadrature oracle (measured 0.1136)."""
        like = BinomialModel(8, 10).as_likelihood()
        grid = np.linspace(0.001, 0.999, 4000)
        freq = mapped_density(like, grid)
        jeff = jeffreys_density(like, grid, "general")
        gap = np.max(np.abs(freq.density - jeff.density))
        peak = max(freq.density.max(), jeff.density.max())
        assert gap / peak < 0.125


class TestCoverage:
    def test_gaussian_family_nominal(self):
        report = coverage_mc(GaussianFamily(), 0.0, 1.96, 4000, seed=11)
        assert report.covered == pytest.approx(0.95, abs=3 * report.se)

    def test_variance_family_near_nominal(self):
        report = coverage_mc(VarianceFamily(4), 1.0, 1.645, 10_000, seed=2)
        assert report.covered == pytest.approx(0.90, abs=0.02)

    def test_binomial_family_matches_enumeration(self):
        """Oracle: exhaustive enumeration over the 11 outcomes."""
        family = BinomialFamily(10)
        exact = family.exact_coverage(0.8, 1.96)
        report = coverage_mc(family, 0.8, 1.96, 10_000, seed=4)
        assert report.covered == pytest.approx(exact, abs=3 * report.se)

    def test_order_independent_summation(self):
        a = coverage_mc(GaussianFamily(), 0.0, 1.0, 1000, seed=5)
        b = coverage_mc(GaussianFamily(), 0.0, 1.0, 1000, seed=5)
        assert a.covered == b.covered

    def test_too_few_trials(self):
        with pytest.raises(ConfigError):
            coverage_mc(GaussianFamily(), 0.0, 1.96, 10, seed=0)

    def test_report_dict(self):
        report = coverage_mc(GaussianFamily(), 0.0, 1.0, 1000, seed=5)
        d = report.as_dict()
        assert set(d) == {"level", "trials", "covered", "se", "resampled"}


class TestTwoGaussianScene:
    def test_symmetric_midpoint(self):
        scene = TwoGaussianScene(0.0, 2.0, 1.0, 1.0)
        assert scene.p_class_a(1.0) == pytest.approx(0.5)

    def test_degenerate_prior(self):
        scene = TwoGaussianScene(0.0, 2.0, 1.0, 1.0, w_a=1.0)
        np.testing.assert_allclose(
            scene.p_class_a(np.array([-5.0, 0.0, 5.0])), 1.0
        )

    def test_broad_class_wins_both_tails(self):
        scene = TwoGaussianScene(0.0, 1.0, 0.5, 1.5)
        pa = scene.p_class_a(np.array([-8.0, 9.0]))
        assert np.all(1.0 - pa > 0.999)

    def test_logistic_fit_disagrees_in_a_tail(self):
        scene = TwoGaussianScene(0.0, 1.0, 0.5, 1.5)
        grid = np.linspace(-6.0, 7.0, 261)
        curve = two_gaussian_curve(scene, grid, per_class=50, seed=7)
        exact_b = 1.0 - curve.exact_a
        lo = exact_b[0] > 0.99 and curve.fit_a[0] > 0.5
        hi = exact_b[-1] > 0.99 and curve.fit_a[-1] > 0.5
        assert lo or hi

    def test_curve_csv(self, tmp_path):
        scene = TwoGaussianScene(0.0, 1.0, 0.5, 1.5)
        curve = two_gaussian_curve(scene, np.linspace(-3, 3, 20), seed=1)
        path = tmp_path / "demo.csv"
        curve.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[1] == "x,p_a_exact,p_b_exact,p_a_logistic"
        assert len(lines) == 22

    def test_bad_sigma(self):
        with pytest.raises(ConfigError):
            TwoGaussianScene(0.0, 1.0, -1.0, 1.0)
