"""Honest-likelihood classifiers with quantified epistemic uncertainty.

Train small sigmoid networks under a binomial ``-2 ln L`` cost, remap each
weight to a coordinate in which the likelihood is Gaussian, estimate the
remapped inverse covariance by cost inspection, and sample plausible
weight sets by MCMC to obtain output-probability distributions per input.
Analytic reference models (binomial and chi-square variance) validate the
statistical core.
"""

from . import exceptions
from .likelihood import (
    DensityCurve,
    ScalarLikelihood,
    fisher_info,
    jeffreys_density,
    jeffreys_iterate,
    mapped_density,
    theta_of_z,
    z_of_theta,
)
from .refmodels import (
    BinomialModel,
    TwoGaussianScene,
    VarianceModel,
    binomial_z,
    coverage_mc,
    two_gaussian_curve,
    variance_z,
)

__version__ = "0.1.0"
