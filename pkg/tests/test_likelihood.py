"""Tests for the scalar-likelihood core: the signed-root transform, its
inverse, observed information, grid densities and the iterated
information mapping."""

import math

import numpy as np
import pytest

from epimap.exceptions import (
    DegenerateDensityError,
    DomainError,
    EndpointError,
    MleMisspecifiedError,
    NonLogConcaveError,
    UnreachableZError,
)
from epimap.likelihood import (
    DensityCurve,
    ScalarLikelihood,
    fisher_info,
    jeffreys_density,
    jeffreys_iterate,
    mapped_density,
    theta_of_z,
    z_of_theta,
)
from epimap.refmodels import BinomialModel, VarianceModel


def unit_gaussian():
    """nll2 = theta^2 is the -2 log likelihood of a unit Gaussian."""
    return ScalarLikelihood(0.0, (-math.inf, math.inf), lambda t: t * t)


def variance_like(n, v_hat=1.0):
    return VarianceModel(n, v_hat).as_likelihood()


def binomial_like(n, trials):
    return BinomialModel(n, trials).as_likelihood()


# Closed-form oracles, written independently of the implementation.


def variance_z_oracle(n, v):
    return math.copysign(
        math.sqrt(n * (math.log(v) + 1.0 / v - 1.0)), v - 1.0
    )


def binomial_z_oracle(n, trials, p, p_hat):
    ratio = n * math.log(p / p_hat) + (trials - n) * math.log(
        (1 - p) / (1 - p_hat)
    )
    return math.copysign(math.sqrt(-2.0 * ratio), p - p_hat)


class TestZOfTheta:
    def test_mle_maps_to_origin(self):
        assert z_of_theta(variance_like(4), 1.0) == 0.0

    def test_variance_closed_form(self):
        """Direct evaluation of z(v) = sqrt(n) sign(v-1) sqrt(ln v + 1/v - 1)."""
        z = z_of_theta(variance_like(4), 2.0)
        assert z == pytest.approx(variance_z_oracle(4, 2.0), abs=1e-12)
        assert z == pytest.approx(0.87897, abs=1e-4)

    def test_binomial_log_ratio(self):
        """z at p=0.5 for 8/10 successes, from the log-likelihood ratio."""
        z = z_of_theta(binomial_like(8, 10), 0.5)
        assert z == pytest.approx(binomial_z_oracle(8, 10, 0.5, 0.8), abs=1e-12)
        assert z == pytest.approx(-1.96339, abs=1e-4)

    def test_monotone_in_theta(self):
        model = variance_like(3)
        vs = np.linspace(0.05, 6.0, 200)
        zs = [z_of_theta(model, v) for v in vs]
        assert np.all(np.diff(zs) > 0)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            z_of_theta(variance_like(4), -1.0)

    def test_misspecified_mle(self):
        bad = ScalarLikelihood(1.0, (-10.0, 10.0), lambda t: t * t)
        with pytest.raises(MleMisspecifiedError):
            z_of_theta(bad, 0.0)

    def test_likelihood_is_unit_gaussian_in_z(self):
        """exp(-z^2/2) equals L(theta)/L(mle) pointwise (definitional)."""
        model = binomial_like(8, 10)
        for p in np.linspace(0.05, 0.97, 25):
            z = z_of_theta(model, p)
            lr = math.exp(-0.5 * model.nll2(p))
            assert math.exp(-0.5 * z * z) == pytest.approx(lr, abs=1e-9)


class TestThetaOfZ:
    def test_origin(self):
        assert theta_of_z(variance_like(4), 0.0) == 1.0

    def test_variance_roundtrip(self):
        z = variance_z_oracle(4, 2.0)
        assert theta_of_z(variance_like(4), z) == pytest.approx(2.0, abs=1e-6)

    def test_binomial_roundtrip(self):
        z = binomial_z_oracle(8, 10, 0.5, 0.8)
        assert theta_of_z(binomial_like(8, 10), z) == pytest.approx(0.5, abs=1e-6)

    def test_roundtrip_identity_over_reachable_range(self):
        model = variance_like(5)
        for z in np.linspace(-2.5, 2.5, 21):
            back = z_of_theta(model, theta_of_z(model, z))
            assert back == pytest.approx(z, abs=1e-6)

    def test_unreachable_reports_extreme(self):
        # likelihood saturates on the left: nll2 bounded by 4 there
        model = ScalarLikelihood(
            0.0,
            (-math.inf, math.inf),
            lambda t: t * t if t >= 0 else 4.0 * (1.0 - math.exp(-t * t)),
        )
        with pytest.raises(UnreachableZError) as err:
            theta_of_z(model, -5.0)
        assert err.value.achievable == pytest.approx(-2.0, abs=1e-3)


class TestFisherInfo:
    def test_unit_gaussian_curvature(self):
        assert fisher_info(unit_gaussian(), 0.0) == pytest.approx(1.0, rel=1e-9)

    def test_binomial_closed_form(self):
        """Oracle: information of a binomial at the MLE is N/(p(1-p))."""
        got = fisher_info(binomial_like(8, 10), 0.8)
        assert got == pytest.approx(10.0 / (0.8 * 0.2), rel=1e-3)

    def test_variance_analytic_second_derivative(self):
        """Oracle: d2/dv2 of n/2 (ln v + 1/v) at v=1 equals n/2."""
        got = fisher_info(variance_like(2), 1.0)
        assert got == pytest.approx(1.0, rel=1e-3)

    def test_flat_likelihood_raises(self):
        flat = ScalarLikelihood(0.0, (-1.0, 1.0), lambda t: 0.0)
        with pytest.raises(Exception):
            fisher_info(flat, 0.0)


class TestMappedDensity:
    def test_unit_gaussian_fixed_point(self):
        grid = np.linspace(-5, 5, 801)
        curve = mapped_density(unit_gaussian(), grid)
        ref = np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi)
        np.testing.assert_allclose(curve.density, ref, atol=1e-6)

    def test_binomial_peak_matches_brute_force(self):
        """Dense-grid maximization of L(p)|dz/dp| as the peak oracle."""
        model = binomial_like(8, 10)
        dense = np.linspace(0.001, 0.999, 20001)
        h = 1e-5
        vals = []
        for p in dense:
            lr = math.exp(-0.5 * model.nll2(p))
            dz = (
                z_of_theta(model, p + h) - z_of_theta(model, p - h)
            ) / (2 * h)
            vals.append(lr * abs(dz))
        oracle_peak = dense[int(np.argmax(vals))]

        grid = np.linspace(0.001, 0.999, 2000)
        curve = mapped_density(model, grid)
        assert abs(curve.peak() - oracle_peak) <= curve.spacing_at_peak()

    def test_variance_curve_normalized(self):
        grid = np.linspace(0.01, 8.0, 1500)
        curve = mapped_density(variance_like(2), grid)
        assert curve.normalized
        assert curve.integral() == pytest.approx(1.0, abs=1e-6)

    def test_reparameterisation_invariance(self):
        """Pushing the density through a monotone transform and back
        reproduces the original curve (ordering of likelihoods kept)."""
        model = variance_like(3)
        grid_v = np.linspace(0.15, 5.0, 900)
        base = mapped_density(model, grid_v)

        # same model expressed against u = ln v
        logged = ScalarLikelihood(
            0.0,
            (-math.inf, math.inf),
            lambda u: model.nll2(math.exp(u)),
        )
        grid_u = np.log(grid_v)
        curve_u = mapped_density(logged, grid_u)
        pushed_back = curve_u.density / grid_v  # du/dv = 1/v
        pushed_back = pushed_back / np.trapezoid(pushed_back, grid_v)
        np.testing.assert_allclose(base.density, pushed_back, atol=2e-4)


class TestJeffreysDensity:
    @pytest.mark.parametrize(
        "n,rule,a",
        [(2, "general", 1.5), (2, "non-location", 1.0),
         (4, "general", 1.5), (4, "non-location", 1.0)],
    )
    def test_variance_peak_law(self, n, rule, a):
        """Peak of L(v)/v^a sits at n/(n+2a)."""
        grid = np.linspace(0.01, 4.0, 2000)
        curve = jeffreys_density(variance_like(n), grid, rule)
        assert abs(curve.peak() - n / (n + 2 * a)) <= curve.spacing_at_peak()

    def test_binomial_all_successes_monotone(self):
        """L(p) = p^2 times a symmetric prior increases on (0, 1)."""
        grid = np.linspace(0.01, 0.99, 400)
        curve = jeffreys_density(binomial_like(2, 2), grid, "general")
        assert np.all(np.diff(curve.density) > 0)
        assert curve.peak() == pytest.approx(0.99)

    def test_explicit_prior(self):
        grid = np.linspace(0.1, 4.0, 500)
        curve = jeffreys_density(
            variance_like(2), grid, "explicit", prior=lambda v: 1.0 / v
        )
        ref = jeffreys_density(variance_like(2), grid, "non-location")
        np.testing.assert_allclose(curve.density, ref.density, rtol=1e-12)

    def test_grid_touching_endpoint_rejected(self):
        grid = np.linspace(0.0, 0.99, 100)
        with pytest.raises(EndpointError):
            jeffreys_density(binomial_like(2, 2), grid, "general")

    def test_unknown_rule(self):
        with pytest.raises(EndpointError):
            jeffreys_density(
                binomial_like(2, 2), np.linspace(0.1, 0.9, 50), "non-location"
            )


class TestJeffreysIterate:
    def test_wide_gaussian_becomes_unit(self):
        """A sigma=2 Gaussian log likelihood maps to unit curvature in one
        application."""
        theta = np.linspace(-8, 8, 4001)
        omega, lt = jeffreys_iterate(theta, -(theta**2) / 8.0)
        w = np.abs(omega) <= 1.0
        coefs = np.polyfit(omega[w], lt[w], 2)
        assert -2.0 * coefs[0] == pytest.approx(1.0, abs=1e-3)

    def test_unit_gaussian_fixed_point(self):
        theta = np.linspace(-8, 8, 4001)
        omega, lt = jeffreys_iterate(theta, -(theta**2) / 2.0)
        kept = theta[3:-3]
        np.testing.assert_allclose(omega, kept, atol=1e-9)
        np.testing.assert_allclose(lt, -(kept**2) / 2.0)

    def test_cubic_perturbation_halved_with_sign_flip(self):
        eps = 0.01
        theta = np.linspace(-8, 8, 4001)
        omega, lt = jeffreys_iterate(theta, -(theta**2) / 2.0 + eps * theta**3)
        w = np.abs(omega) <= 0.8
        coefs = np.polyfit(omega[w], lt[w], 3)
        assert coefs[0] == pytest.approx(-eps / 2.0, rel=0.10)

    def test_repeated_iteration_keeps_halving(self):
        """Asymmetry shrinks by about a factor two (with a sign flip) per
        application."""
        eps = 0.01
        theta = np.linspace(-8, 8, 4001)
        grid, vals = theta, -(theta**2) / 2.0 + eps * theta**3
        expected = -eps / 2.0
        for _ in range(4):
            grid, vals = jeffreys_iterate(grid, vals)
            w = np.abs(grid) <= 0.8
            coefs = np.polyfit(grid[w], vals[w], 3)
            assert coefs[0] == pytest.approx(expected, rel=0.15)
            expected *= -0.5

    def test_non_log_concave_reports_interval(self):
        """A heavy-tailed log likelihood is convex beyond |theta| = 1."""
        theta = np.linspace(-3, 3, 601)
        vals = -np.log1p(theta**2)
        with pytest.raises(NonLogConcaveError) as err:
            jeffreys_iterate(theta, vals)
        lo, hi = err.value.interval
        assert lo == pytest.approx(-3.0, abs=0.1)
        assert hi == pytest.approx(-1.0, abs=0.1)


class TestDensityCurve:
    def test_csv_roundtrip(self, tmp_path):
        curve = DensityCurve(
            np.linspace(0, 1, 11), np.linspace(1, 2, 11), False
        ).normalize()
        path = tmp_path / "curve.csv"
        curve.write_csv(path)
        text = path.read_text().splitlines()
        assert text[0] == "# normalized=true"
        assert text[1] == "parameter,density"
        back = DensityCurve.read_csv(path)
        assert back.normalized
        np.testing.assert_allclose(back.grid, curve.grid)
        np.testing.assert_allclose(back.density, curve.density, rtol=1e-10)

    def test_grid_must_increase(self):
        with pytest.raises(DegenerateDensityError):
            DensityCurve(np.array([0.0, 0.0, 1.0]), np.ones(3), False)

    def test_zero_mass_rejected(self):
        with pytest.raises(DegenerateDensityError):
            DensityCurve(np.linspace(0, 1, 5), np.zeros(5), False).normalize()
