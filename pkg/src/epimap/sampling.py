"""MCMC over the remapped weight space and output-uncertainty summaries.

A Metropolis chain with isotropic Gaussian steps explores the density
``exp(-z' M z / 2)`` defined by the inverse covariance, with two honesty
constraints applied as zero target density: proposals outside any
weight's verified map range, and proposals whose *true* cost exceeds the
optimum by more than the configured cap.  Thinned states become weight
draws; pushing an input pattern through each drawn network yields the
epistemic distribution of every class output.

The recorded (Mahalanobis, true cost change) pairs double as the quality
diagnostic: on a faithful map they scatter around the unit-slope line,
and the residual spread converts into an equivalent RMS error per
z-coordinate by Monte-Carlo calibration.

Aleatoric uncertainty has its own entry point: perturb the input with
per-component noise and summarise the very same way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ChainDiagnosticError,
    ConfigError,
    InsufficientDataError,
)
from .network import Network, forward
from .remap import InverseCovariance, RemapResult, ZMap, mahalanobis

__all__ = [
    "McmcConfig",
    "SampleSet",
    "run_chain",
    "run_chain_for_network",
    "OutputDistribution",
    "output_distribution",
    "GaussianityDiagnostic",
    "gaussianity_diagnostic",
    "input_noise_propagation",
]


@dataclass(frozen=True)
class McmcConfig:
    step_sigma: float = 0.2
    thin: int = 50
    n_samples: int = 100
    cost_cap_multiplier: float = 4.0
    seed: int = 0
    burn_in_thins: int = 10
    check_cost_cap: bool = True

    def __post_init__(self):
        if self.step_sigma <= 0:
            raise ConfigError(f"step_sigma must be > 0, got {self.step_sigma}")
        if self.thin < 1 or self.n_samples < 1:
            raise ConfigError("thin and n_samples must be >= 1")


@dataclass(frozen=True)
class SampleSet:
    """Accepted weight draws with their z vectors, Mahalanobis values and
    honestly evaluated cost changes."""

    z: np.ndarray
    theta: np.ndarray
    mahalanobis: np.ndarray
    true_dq: np.ndarray
    acceptance_rate: float
    n_cost_evaluations: int
    config: McmcConfig
    net: Network | None = None

    def __len__(self) -> int:
        return self.z.shape[0]


def _theta_from_z(maps, theta0, z):
    theta = np.array(theta0, dtype=float)
    for k, m in enumerate(maps):
        theta[m.index] = theta0[m.index] + m.displacement(z[k])
    return theta


def run_chain(
    ic: InverseCovariance,
    maps,
    cost_fn,
    q0: float,
    config: McmcConfig = McmcConfig(),
    net: Network | None = None,
    theta0=None,
) -> SampleSet:
    """Metropolis sampling of plausible weight sets.

    Proposals step every z coordinate by ``N(0, step_sigma^2)``.  Target
    density ``exp(-D/2)`` with ``D`` the floored Mahalanobis form; a
    proposal leaving any verified range, or whose true cost change
    exceeds ``cost_cap_multiplier`` times the weight count, is rejected
    outright.  After a burn-in of ``burn_in_thins`` thinning periods,
    every ``thin``-th state is emitted until ``n_samples`` draws exist,
    each carrying its honestly evaluated cost change.
    """
    maps = list(maps)
    dim = ic.dim
    if len(maps) != dim:
        raise ConfigError(f"{len(maps)} maps for a {dim}-dimensional form")
    if theta0 is None:
        if net is None:
            raise ConfigError("pass theta0 or a network")
        theta0 = net.theta
    theta0 = np.array(theta0, dtype=float)
    lo = np.array([m.z_lo for m in maps])
    hi = np.array([m.z_hi for m in maps])
    cap = config.cost_cap_multiplier * dim

    rng = np.random.default_rng(config.seed)
    z = np.zeros(dim)
    d_cur = mahalanobis(ic, z)
    dq_cur = 0.0
    evals = 0

    out_z = np.empty((config.n_samples, dim))
    out_theta = np.empty((config.n_samples, len(theta0)))
    out_d = np.empty(config.n_samples)
    out_dq = np.empty(config.n_samples)

    burn = config.burn_in_thins * config.thin
    total = burn + config.thin * config.n_samples
    proposals = accepts = 0
    emitted = 0
    for step in range(1, total + 1):
        prop = z + rng.normal(0.0, config.step_sigma, size=dim)
        proposals += 1
        u = rng.uniform()  # drawn unconditionally to keep the stream aligned
        if np.all(prop >= lo) and np.all(prop <= hi):
            d_prop = mahalanobis(ic, prop)
            dq_prop = None
            if config.check_cost_cap:
                dq_prop = cost_fn(_theta_from_z(maps, theta0, prop)) - q0
                evals += 1
            if dq_prop is None or dq_prop <= cap:
                if math.log(max(u, 1e-300)) < -0.5 * (d_prop - d_cur):
                    z = prop
                    d_cur = d_prop
                    dq_cur = dq_prop
                    accepts += 1
        if proposals == 5000 and accepts / proposals < 0.01:
            raise ChainDiagnosticError(
                f"acceptance rate {accepts / proposals:.3%} after "
                f"{proposals} proposals; adjust step_sigma"
            )
        if step > burn and (step - burn) % config.thin == 0:
            theta = _theta_from_z(maps, theta0, z)
            if dq_cur is None:
                dq_cur = cost_fn(theta) - q0
                evals += 1
            out_z[emitted] = z
            out_theta[emitted] = theta
            out_d[emitted] = d_cur
            out_dq[emitted] = dq_cur
            emitted += 1
            if emitted == config.n_samples:
                break
    return SampleSet(
        z=out_z,
        theta=out_theta,
        mahalanobis=out_d,
        true_dq=out_dq,
        acceptance_rate=accepts / max(proposals, 1),
        n_cost_evaluations=evals,
        config=config,
        net=net,
    )


def run_chain_for_network(
    net: Network,
    data,
    remap: RemapResult,
    config: McmcConfig = McmcConfig(),
) -> SampleSet:
    """Convenience wrapper binding the chain to a trained network."""
    from .remap import network_cost_fn

    return run_chain(
        remap.ic,
        remap.maps,
        network_cost_fn(net, data),
        remap.q0,
        config,
        net=net,
    )


@dataclass(frozen=True)
class OutputDistribution:
    """Per-class histogram plus summary of the sampled outputs."""

    outputs: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    p5: np.ndarray
    p95: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_draws": int(self.outputs.shape[0]),
                "bin_edges": [float(v) for v in self.bin_edges],
                "counts_per_class": self.counts.astype(int).tolist(),
                "mean": [float(v) for v in self.mean],
                "sd": [float(v) for v in self.sd],
                "p5": [float(v) for v in self.p5],
                "p95": [float(v) for v in self.p95],
            },
            indent=1,
        )


def _summarise_outputs(outputs: np.ndarray, bins: int) -> OutputDistribution:
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = np.stack(
        [np.histogram(outputs[:, m], bins=edges)[0]
         for m in range(outputs.shape[1])]
    )
    return OutputDistribution(
        outputs=outputs,
        bin_edges=edges,
        counts=counts,
        mean=outputs.mean(axis=0),
        sd=outputs.std(axis=0, ddof=1) if len(outputs) > 1 else
        np.zeros(outputs.shape[1]),
        p5=np.percentile(outputs, 5.0, axis=0),
        p95=np.percentile(outputs, 95.0, axis=0),
    )


def output_distribution(
    samples: SampleSet, x, bins: int = 20
) -> OutputDistribution:
    """Distribution of every class output at one input pattern across the
    sampled weight sets."""
    if len(samples) == 0:
        raise InsufficientDataError("empty sample set")
    if samples.net is None:
        raise ConfigError("sample set carries no network")
    outputs = np.stack(
        [forward(samples.net.with_theta(t), x) for t in samples.theta]
    )
    return _summarise_outputs(outputs, bins)


@dataclass(frozen=True)
class GaussianityDiagnostic:
    """Fit of the true cost change against the Mahalanobis form."""

    mahalanobis: np.ndarray
    true_dq: np.ndarray
    slope: float
    residual_rms: float
    equivalent_z_error: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "slope": self.slope,
                "residual_rms": self.residual_rms,
                "equivalent_z_error": self.equivalent_z_error,
                "n_draws": int(len(self.mahalanobis)),
            },
            indent=1,
        )

    def pairs_csv(self) -> str:
        lines = ["mahalanobis,true_dq"]
        for d, q in zip(self.mahalanobis, self.true_dq):
            lines.append(f"{d:.12g},{q:.12g}")
        return "\n".join(lines) + "\n"


def gaussianity_diagnostic(
    samples: SampleSet,
    ic: InverseCovariance,
    seed: int = 0,
    calibration_trials: int = 1000,
) -> GaussianityDiagnostic:
    """Slope and scatter of true cost change versus Mahalanobis distance.

    A faithful Gaussian picture puts the pairs on the unit-slope line
    through the origin.  The residual spread is converted into an
    equivalent RMS error on each z-coordinate: perturb the drawn z
    vectors by candidate noise levels and match the induced spread of the
    quadratic form to the observed one.
    """
    if len(samples) < 10:
        raise InsufficientDataError(
            f"need at least 10 draws, got {len(samples)}"
        )
    d = samples.mahalanobis
    dq = samples.true_dq
    denom = float(d @ d)
    if denom == 0.0:
        raise InsufficientDataError("all draws sit at the optimum")
    slope = float(d @ dq) / denom
    resid = dq - slope * d
    resid_rms = float(np.sqrt(np.mean(resid * resid)))

    rng = np.random.default_rng(seed)
    reps = max(1, math.ceil(calibration_trials / len(samples)))

    def induced_rms(eps: float) -> float:
        acc = 0.0
        count = 0
        for z, d_val in zip(samples.z, d):
            for _ in range(reps):
                zp = z + eps * rng.standard_normal(len(z))
                diff = mahalanobis(ic, zp) - d_val
                acc += diff * diff
                count += 1
        return math.sqrt(acc / count)

    if resid_rms <= 1e-12:
        eps_hat = 0.0
    else:
        lo_e, hi_e = 1e-4, 2.0
        for _ in range(24):
            mid = math.sqrt(lo_e * hi_e)
            if induced_rms(mid) < resid_rms:
                lo_e = mid
            else:
                hi_e = mid
        eps_hat = math.sqrt(lo_e * hi_e)
    return GaussianityDiagnostic(
        mahalanobis=d,
        true_dq=dq,
        slope=slope,
        residual_rms=resid_rms,
        equivalent_z_error=eps_hat,
    )


def input_noise_propagation(
    net: Network, x, sds, n_draws: int, seed: int, bins: int = 20
) -> OutputDistribution:
    """Aleatoric counterpart: Gaussian-perturb the input pattern and push
    every draw through the fixed network."""
    x = np.asarray(x, dtype=float)
    sds = np.asarray(sds, dtype=float)
    if np.any(sds < 0):
        raise ConfigError("noise standard deviations must be >= 0")
    if sds.shape != x.shape:
        raise ConfigError(f"sds shape {sds.shape} does not match input {x.shape}")
    rng = np.random.default_rng(seed)
    draws = x + rng.standard_normal((n_draws, len(x))) * sds
    outputs = forward(net, draws)
    return _summarise_outputs(np.atleast_2d(outputs), bins)
