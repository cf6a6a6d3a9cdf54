"""Closed-form reference likelihoods and validation helpers.

Two analytic models exercise the scalar-likelihood machinery end to end:
the variance of a known-mean Gaussian sample (strongly skewed likelihood)
and a binomial success probability (the statistic behind classifier
outputs).  Both carry their closed-form signed-root transforms and named
uninformative priors, a Monte-Carlo coverage check validates that the
transform yields near-nominal hypothesis tests, and a two-Gaussian scene
demonstrates how a fitted sigmoid misbehaves in the tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import binom

from .exceptions import ConfigError, DomainError, EndpointError
from .likelihood import ScalarLikelihood

__all__ = [
    "VarianceModel",
    "BinomialModel",
    "variance_z",
    "binomial_z",
    "CoverageReport",
    "GaussianFamily",
    "VarianceFamily",
    "BinomialFamily",
    "coverage_mc",
    "TwoGaussianScene",
    "TwoGaussianCurve",
    "two_gaussian_curve",
]


# ---------------------------------------------------------------------------
# Variance of a Gaussian sample with known mean
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceModel:
    """Variance estimate from ``n`` Gaussian observations with known mean.

    The likelihood depends on the data only through the MLE ``v_hat``,
    and is scale invariant: curves for any ``v_hat`` are the ``v_hat=1``
    curves stretched by ``v_hat``.
    """

    n: int
    v_hat: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"sample count must be >= 1, got {self.n}")
        if self.v_hat <= 0:
            raise DomainError(f"v_hat must be positive, got {self.v_hat}")

    def nll2(self, v: float) -> float:
        """``-2 ln L(v)`` relative to its minimum at ``v_hat``."""
        if v <= 0:
            raise DomainError(f"variance must be positive, got {v}")
        r = v / self.v_hat
        return self.n * (math.log(r) + 1.0 / r - 1.0)

    def as_likelihood(self) -> ScalarLikelihood:
        a_general = 1.5
        a_nonloc = 1.0
        return ScalarLikelihood(
            mle=self.v_hat,
            domain=(0.0, math.inf),
            nll2=self.nll2,
            priors={
                "general": lambda v: v ** -a_general,
                "non-location": lambda v: v ** -a_nonloc,
            },
        )


def variance_z(model: VarianceModel, v: float) -> float:
    """Closed-form signed-root transform for the variance model:
    ``sqrt(n) * sign(v - v_hat) * sqrt(ln r + 1/r - 1)`` with
    ``r = v / v_hat``."""
    if v <= 0:
        raise DomainError(f"variance must be positive, got {v}")
    r = v / model.v_hat
    arg = math.log(r) + 1.0 / r - 1.0
    return math.copysign(math.sqrt(model.n * max(arg, 0.0)), v - model.v_hat)


# ---------------------------------------------------------------------------
# Binomial success probability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinomialModel:
    """``successes`` out of ``trials``, parameterised by the probability p.

    Uses the ``0 * ln 0 = 0`` convention so the endpoint MLEs (all
    failures or all successes) have a well defined likelihood.
    """

    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.successes <= self.trials:
            raise ConfigError(
                f"successes must lie in [0, {self.trials}], got {self.successes}"
            )

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    def _loglik(self, p: float) -> float:
        n, N = self.successes, self.trials
        out = 0.0
        if n:
            out += n * math.log(p)
        if N - n:
            out += (N - n) * math.log1p(-p)
        return out

    def nll2(self, p: float) -> float:
        """``-2 ln(L(p)/L(p_hat))``; finite on the open interval (0, 1)."""
        if not 0.0 < p < 1.0:
            if p == self.p_hat:  # endpoint MLE for n=0 or n=N
                return 0.0
            raise EndpointError(f"p must lie strictly in (0, 1), got {p}")
        return -2.0 * (self._loglik(p) - self._loglik_hat())

    def _loglik_hat(self) -> float:
        n, N = self.successes, self.trials
        out = 0.0
        if n:
            out += n * math.log(n / N)
        if N - n:
            out += (N - n) * math.log((N - n) / N)
        return out

    def as_likelihood(self) -> ScalarLikelihood:
        return ScalarLikelihood(
            mle=self.p_hat,
            domain=(0.0, 1.0),
            nll2=self.nll2,
            priors={"general": lambda p: 1.0 / math.sqrt(p * (1.0 - p))},
        )


def binomial_z(model: BinomialModel, p: float) -> float:
    """Closed-form signed-root transform for the binomial model, with the
    sign of ``p - p_hat``."""
    if not 0.0 < p < 1.0:
        raise EndpointError(f"p must lie strictly in (0, 1), got {p}")
    return math.copysign(
        math.sqrt(max(model.nll2(p), 0.0)), p - model.p_hat
    )


# ---------------------------------------------------------------------------
# Monte-Carlo coverage of the signed-root interval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageReport:
    level: float
    trials: int
    covered: float
    se: float
    resampled: int = 0

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "trials": self.trials,
            "covered": self.covered,
            "se": self.se,
            "resampled": self.resampled,
        }


class GaussianFamily:
    """Exact unit-Gaussian likelihood family: the estimate is the true
    parameter plus unit normal noise and z is the raw residual."""

    def simulate(self, rng: np.random.Generator, true: float) -> float:
        return true + float(rng.standard_normal())

    def z_at_true(self, true: float, estimate: float) -> float:
        return true - estimate

    def degenerate(self, estimate: float) -> bool:
        return not math.isfinite(estimate)


@dataclass(frozen=True)
class VarianceFamily:
    """Known-mean Gaussian variance: the realized MLE is a scaled
    chi-square (mean of n squared unit normals times the true variance)."""

    n: int

    def simulate(self, rng: np.random.Generator, true: float) -> float:
        x = rng.standard_normal(self.n)
        return true * float(np.mean(x * x))

    def z_at_true(self, true: float, v_hat: float) -> float:
        return variance_z(VarianceModel(self.n, v_hat), true)

    def degenerate(self, v_hat: float) -> bool:
        return v_hat <= 0 or not math.isfinite(v_hat)


@dataclass(frozen=True)
class BinomialFamily:
    """Binomial counts drawn by inverse-CDF sampling of a uniform."""

    trials: int

    def simulate(self, rng: np.random.Generator, true: float) -> int:
        u = float(rng.uniform())
        return int(binom.ppf(u, self.trials, true))

    def z_at_true(self, true: float, k: int) -> float:
        return binomial_z(BinomialModel(k, self.trials), true)

    def degenerate(self, k) -> bool:
        return False

    def exact_coverage(self, true: float, z_level: float) -> float:
        """Exhaustive enumeration over all outcomes; oracle for the
        Monte-Carlo estimate (coverage is discrete in the level)."""
        total = 0.0
        for k in range(self.trials + 1):
            if abs(self.z_at_true(true, k)) <= z_level:
                total += binom.pmf(k, self.trials, true)
        return total


def coverage_mc(
    family,
    true_param: float,
    z_level: float,
    trials: int,
    seed: int,
) -> CoverageReport:
    """Fraction of simulated datasets whose realized likelihood puts the
    true parameter within ``|z| <= z_level``.

    Each trial gets its own child seed, so results are order independent
    and trials may run concurrently.  Degenerate draws are resampled and
    counted.
    """
    if trials < 1000:
        raise ConfigError(f"need at least 1000 trials, got {trials}")
    if z_level <= 0:
        raise ConfigError(f"z_level must be positive, got {z_level}")
    children = np.random.SeedSequence(seed).spawn(trials)
    covered = 0
    resampled = 0
    for child in children:
        rng = np.random.default_rng(child)
        est = family.simulate(rng, true_param)
        while family.degenerate(est):
            resampled += 1
            est = family.simulate(rng, true_param)
        if abs(family.z_at_true(true_param, est)) <= z_level:
            covered += 1
    frac = covered / trials
    se = math.sqrt(max(frac * (1.0 - frac), 1.0 / trials) / trials)
    return CoverageReport(z_level, trials, frac, se, resampled)


# ---------------------------------------------------------------------------
# Two-Gaussian conditional probability scene
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoGaussianScene:
    """Two one-dimensional Gaussian class densities with priors.

    With unequal widths the conditional probability of the broader class
    tends to one in both tails, which no monotone sigmoid can reproduce.
    """

    mu_a: float
    mu_b: float
    sigma_a: float
    sigma_b: float
    w_a: float = 0.5

    def __post_init__(self):
        if self.sigma_a <= 0 or self.sigma_b <= 0:
            raise ConfigError("class widths must be positive")
        if not 0.0 <= self.w_a <= 1.0:
            raise ConfigError(f"prior weight must lie in [0, 1], got {self.w_a}")

    @property
    def w_b(self) -> float:
        return 1.0 - self.w_a

    def p_class_a(self, x):
        """Exact conditional probability of class A at x."""
        x = np.asarray(x, dtype=float)
        la = _log_normal(x, self.mu_a, self.sigma_a)
        lb = _log_normal(x, self.mu_b, self.sigma_b)
        if self.w_a == 0.0:
            return np.zeros_like(x)
        if self.w_a == 1.0:
            return np.ones_like(x)
        # stable ratio via the log-odds
        t = math.log(self.w_a / self.w_b) + la - lb
        return 1.0 / (1.0 + np.exp(-t))

    def sample(self, rng: np.random.Generator, per_class: int):
        """Fixed per-class draws with binary labels (A -> 1)."""
        xa = rng.normal(self.mu_a, self.sigma_a, per_class)
        xb = rng.normal(self.mu_b, self.sigma_b, per_class)
        x = np.concatenate([xa, xb])
        y = np.concatenate([np.ones(per_class), np.zeros(per_class)])
        return x, y


def _log_normal(x, mu, sigma):
    return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma)


@dataclass(frozen=True)
class TwoGaussianCurve:
    grid: np.ndarray
    exact_a: np.ndarray
    fit_a: np.ndarray
    center: float
    scale: float
    sample_x: np.ndarray
    sample_y: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# logistic center={self.center:.12g} scale={self.scale:.12g}\n")
            fh.write("x,p_a_exact,p_b_exact,p_a_logistic\n")
            for x, pa, fa in zip(self.grid, self.exact_a, self.fit_a):
                fh.write(f"{x:.12g},{pa:.12g},{1.0 - pa:.12g},{fa:.12g}\n")


def two_gaussian_curve(
    scene: TwoGaussianScene,
    grid,
    per_class: int = 50,
    seed: int = 0,
) -> TwoGaussianCurve:
    """Exact conditional probability on a grid plus the best two-parameter
    logistic fitted by least squares to labelled draws from the scene.

    The fit ``sigmoid((x - center)/scale)`` is the monotone model a small
    classifier would adopt; comparing it with the exact curve exposes the
    tail where a monotone fit must disagree with the truth.
    """
    grid = np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    x, y = scene.sample(rng, per_class)

    def resid(params):
        c, s = params
        return _sigmoid((x - c) / s) - y

    c0 = 0.5 * (scene.mu_a + scene.mu_b)
    s0 = scene.mu_a - scene.mu_b
    if s0 == 0.0:
        s0 = 0.5 * (scene.sigma_a + scene.sigma_b)
    fit = least_squares(resid, x0=[c0, s0], method="lm")
    c, s = fit.x
    return TwoGaussianCurve(
        grid=grid,
        exact_a=scene.p_class_a(grid),
        fit_a=_sigmoid((grid - c) / s),
        center=float(c),
        scale=float(s),
        sample_x=x,
        sample_y=y,
    )


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t, dtype=float)))
