"""Semantic exception hierarchy.

Public functions raise these rather than bare ValueError so callers can
distinguish contract violations (bad inputs) from numerical or statistical
failure modes (flat likelihoods, unreachable map ranges, diverging chains).
"""


class EpimapError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EpimapError, ValueError):
    """Parameter lies outside the likelihood's open domain, or an
    evaluation returned a non-finite value inside it."""


class MleMisspecifiedError(EpimapError):
    """The likelihood evaluated below its claimed minimum by more than the
    evaluation tolerance; the stated MLE is wrong."""


class UnreachableZError(EpimapError):
    """The requested z value is beyond the likelihood's range within the
    domain. Carries the achievable extreme."""

    def __init__(self, msg: str, achievable: float):
        super().__init__(msg)
        self.achievable = achievable


class FlatLikelihoodError(EpimapError):
    """Non-positive curvature at the optimum; no information to map."""


class NonLogConcaveError(EpimapError):
    """Negative information somewhere on the grid. Carries the offending
    parameter interval."""

    def __init__(self, msg: str, interval: tuple[float, float]):
        super().__init__(msg)
        self.interval = interval


class DegenerateDensityError(EpimapError):
    """A density curve has zero (or non-finite) total mass."""


class EndpointError(EpimapError, ValueError):
    """A prior or likelihood is undefined at a grid endpoint; the grid must
    exclude the domain boundary."""


class DatasetError(EpimapError, ValueError):
    """Empty dataset or inconsistent input/target dimensions."""


class InputError(EpimapError, ValueError):
    """Non-finite or wrongly shaped input pattern."""


class DivergenceError(EpimapError):
    """Training cost increased persistently. Carries the cost trace."""

    def __init__(self, msg: str, trace):
        super().__init__(msg)
        self.trace = trace


class NotOptimisedError(EpimapError):
    """An operation that requires a fully optimised network was invoked on
    a model whose convergence flag is false."""


class UnconstrainedParameterError(EpimapError):
    """The cost is flat in some weight out to the search limit; the data do
    not constrain this parameter."""


class SplineProbeError(EpimapError):
    """Cost probes for a weight map were non-monotone. Carries the probe
    dump for diagnosis."""

    def __init__(self, msg: str, probes):
        super().__init__(msg)
        self.probes = probes


class ProbeError(EpimapError):
    """A cost evaluation at a covariance probe point was non-finite even
    after shrinking the probe."""


class ChainDiagnosticError(EpimapError):
    """MCMC acceptance rate collapsed; the step size needs attention."""


class InsufficientDataError(EpimapError, ValueError):
    """Too few draws to form a diagnostic."""


class AgeCorrectionError(EpimapError, ValueError):
    """Subject age is at or below the correction onset age."""


class ConfigError(EpimapError, ValueError):
    """Invalid configuration values."""
