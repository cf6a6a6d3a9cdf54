"""Scalar likelihood machinery.

A one-parameter likelihood is wrapped as a :class:`ScalarLikelihood`
holding its MLE, its open domain and an evaluator for ``-2 ln L`` relative
to the minimum.  Everything else is derived from cost-function inspection:

* the signed-root transform ``z(theta)`` that turns the likelihood into a
  unit Gaussian in the new coordinate,
* its numeric inverse ``theta(z)``,
* empirical (observed) information by central differences,
* parameter densities on explicit grids, built either from the derivative
  of the z map or from a named uninformative prior,
* the iterated information mapping that contracts a log-concave curve
  toward the Gaussian fixed point.

Densities are represented as grid curves rather than closed forms so that
trained-network cost functions plug into the same interface.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .exceptions import (
    DegenerateDensityError,
    DomainError,
    EndpointError,
    FlatLikelihoodError,
    MleMisspecifiedError,
    NonLogConcaveError,
    UnreachableZError,
)

# Relative tolerance for "evaluates below the minimum" checks.
MLE_TOL = 1e-9

__all__ = [
    "ScalarLikelihood",
    "DensityCurve",
    "z_of_theta",
    "theta_of_z",
    "fisher_info",
    "mapped_density",
    "jeffreys_density",
    "jeffreys_iterate",
]


@dataclass(frozen=True)
class ScalarLikelihood:
    """A one-parameter negative log likelihood with a known optimum.

    Parameters
    ----------
    mle:
        Parameter value at the likelihood maximum.
    domain:
        Open interval ``(lo, hi)`` on which ``nll2`` is finite; either end
        may be infinite.
    nll2:
        Evaluator for ``-2 ln L(theta)`` up to an additive constant; it is
        treated as defined relative to its minimum, and must be finite for
        every theta strictly inside the domain.
    priors:
        Optional named uninformative priors, e.g. ``{"general": f}``.
        Used by :func:`jeffreys_density` when a closed form is known.
    """

    mle: float
    domain: tuple[float, float]
    nll2: Callable[[float], float]
    priors: Mapping[str, Callable[[float], float]] = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError(f"empty domain ({lo}, {hi})")
        if not (lo <= self.mle <= hi):
            raise DomainError(f"mle {self.mle} outside domain ({lo}, {hi})")

    def contains(self, theta: float) -> bool:
        lo, hi = self.domain
        return lo < theta < hi

    def _nll2_checked(self, theta: float) -> float:
        if not self.contains(theta) and theta != self.mle:
            raise DomainError(
                f"theta={theta} outside open domain {self.domain}"
            )
        val = float(self.nll2(theta))
        if not math.isfinite(val):
            raise DomainError(f"nll2 is not finite at theta={theta}")
        return val


@dataclass(frozen=True)
class DensityCurve:
    """Non-negative weights over an ordered parameter grid."""

    grid: np.ndarray
    density: np.ndarray
    normalized: bool

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        if grid.ndim != 1 or grid.shape != dens.shape:
            raise DegenerateDensityError("grid and density shapes differ")
        if not np.all(np.diff(grid) > 0):
            raise DegenerateDensityError("grid must be strictly increasing")
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise DegenerateDensityError("density must be finite and >= 0")

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def normalize(self) -> "DensityCurve":
        total = self.integral()
        if not math.isfinite(total) or total <= 0:
            raise DegenerateDensityError(f"total mass {total}")
        return DensityCurve(self.grid, self.density / total, True)

    def peak(self) -> float:
        """Grid point with the largest density."""
        return float(self.grid[int(np.argmax(self.density))])

    def spacing_at_peak(self) -> float:
        i = int(np.argmax(self.density))
        i = min(max(i, 1), len(self.grid) - 1)
        return float(self.grid[i] - self.grid[i - 1])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# normalized={'true' if self.normalized else 'false'}\n")
            fh.write("parameter,density\n")
            for g, d in zip(self.grid, self.density):
                fh.write(f"{g:.12g},{d:.12g}\n")

    @classmethod
    def read_csv(cls, path) -> "DensityCurve":
        normalized = False
        grid, dens = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    normalized = "normalized=true" in line.replace(" ", "")
                    continue
                if line.startswith("parameter"):
                    continue
                g, d = line.split(",")
                grid.append(float(g))
                dens.append(float(d))
        return cls(np.array(grid), np.array(dens), normalized)


def _default_step(model: ScalarLikelihood) -> float:
    return 1e-4 * max(abs(model.mle), 1.0)


def z_of_theta(model: ScalarLikelihood, theta: float) -> float:
    """Signed square root of the log likelihood ratio at ``theta``.

    ``z = sign(theta - mle) * sqrt(nll2(theta) - nll2(mle))``; zero at the
    MLE and monotone in theta for unimodal likelihoods.  Expressed against
    z the likelihood ratio is exactly ``exp(-z**2 / 2)``.
    """
    ref = model._nll2_checked(model.mle)
    val = model._nll2_checked(theta)
    diff = val - ref
    if diff < 0:
        if diff < -MLE_TOL * max(1.0, abs(ref)):
            raise MleMisspecifiedError(
                f"nll2({theta})={val} lies below nll2(mle)={ref}; "
                "the stated MLE is not the minimum"
            )
        diff = 0.0
    return math.copysign(math.sqrt(diff), theta - model.mle) if diff else 0.0


def theta_of_z(
    model: ScalarLikelihood,
    z: float,
    tol: float = 1e-9,
    max_doublings: int = 80,
) -> float:
    """Numeric inverse of :func:`z_of_theta` by bracketed root finding.

    Brackets by stepping outward from the MLE (doubling steps toward an
    infinite boundary, geometric approach toward a finite one), then
    solves with Brent's method.  Raises :class:`UnreachableZError` with the
    achievable extreme when ``|z|`` exceeds the likelihood's range inside
    the domain.
    """
    if z == 0.0:
        return model.mle
    lo, hi = model.domain
    target = abs(z)
    sign = 1.0 if z > 0 else -1.0
    boundary = hi if z > 0 else lo
    inner = model.mle
    step = _default_step(model) * 10.0

    outer = None
    zmax = 0.0
    for k in range(max_doublings):
        if math.isfinite(boundary):
            cand = boundary - (boundary - model.mle) * 0.5 ** (k + 1)
        else:
            cand = model.mle + sign * step * 2.0**k
        zc = abs(z_of_theta(model, cand))
        if zc >= target:
            outer = cand
            break
        inner = cand
        zmax = max(zmax, zc)
    if outer is None:
        raise UnreachableZError(
            f"z={z} unreachable within domain; achievable extreme |z|~{zmax:.6g}",
            achievable=sign * zmax,
        )

    a, b = (inner, outer) if inner < outer else (outer, inner)
    root = brentq(
        lambda t: z_of_theta(model, t) - z,
        a,
        b,
        xtol=tol * max(abs(model.mle), 1.0),
        maxiter=200,
    )
    return float(root)


def fisher_info(
    model: ScalarLikelihood, theta: float, h: float | None = None
) -> float:
    """Observed information ``-d2 ln L / d theta2`` by central differences.

    This is the curvature of ``nll2/2`` at ``theta``, Richardson-refined
    once.  The total information over the dataset, not per datum; per-datum
    scaling is the caller's concern.  Must be positive near the optimum.
    """
    if h is None:
        h = _default_step(model)
    lo, hi = model.domain
    if not (lo < theta - h and theta + h < hi):
        raise DomainError(
            f"theta +- h = {theta} +- {h} leaves the domain {model.domain}"
        )

    def half_curv(step: float) -> float:
        f_p = model._nll2_checked(theta + step)
        f_m = model._nll2_checked(theta - step)
        f_0 = model._nll2_checked(theta)
        return (f_p - 2.0 * f_0 + f_m) / (2.0 * step * step)

    coarse = half_curv(h)
    fine = half_curv(h / 2.0)
    info = (4.0 * fine - coarse) / 3.0
    if info <= 0 and abs(theta - model.mle) <= h:
        raise FlatLikelihoodError(
            f"non-positive information {info} at the optimum"
        )
    return float(info)


def _dz_dtheta(model: ScalarLikelihood, theta: float, h: float) -> float:
    lo, hi = model.domain
    room = min(theta - lo, hi - theta)
    step = min(h, 0.49 * room) if math.isfinite(room) else h
    if step <= 0:
        raise EndpointError(f"grid point {theta} touches the domain boundary")
    z_p = z_of_theta(model, theta + step)
    z_m = z_of_theta(model, theta - step)
    return (z_p - z_m) / (2.0 * step)


def mapped_density(model: ScalarLikelihood, grid) -> DensityCurve:
    """Parameter density from the derivative of the z map.

    ``density(theta) ~ L(theta)/L(mle) * |dz/dtheta|`` with the derivative
    taken by central differences; returned normalized by trapezoid
    quadrature on the caller's grid.
    """
    grid = np.asarray(grid, dtype=float)
    h = _default_step(model)
    ref = model._nll2_checked(model.mle)
    vals = np.empty_like(grid)
    for i, t in enumerate(grid):
        ratio = math.exp(-0.5 * (model._nll2_checked(t) - ref))
        vals[i] = ratio * abs(_dz_dtheta(model, t, h))
    return DensityCurve(grid, vals, False).normalize()


def jeffreys_density(
    model: ScalarLikelihood,
    grid,
    rule: str,
    prior: Callable[[float], float] | None = None,
) -> DensityCurve:
    """Likelihood times a named uninformative prior, normalized.

    ``rule`` is one of ``"general"``, ``"non-location"`` or ``"explicit"``.
    Closed-form priors registered on the model take precedence; for the
    general rule without a registered form the prior falls back to the
    square root of the observed information, which must then be positive
    on the whole grid.  ``"explicit"`` requires the ``prior`` callable.
    Priors are typically singular at domain endpoints, so the grid must
    exclude them.
    """
    grid = np.asarray(grid, dtype=float)
    lo, hi = model.domain
    if grid[0] <= lo or grid[-1] >= hi:
        raise EndpointError(
            "grid must lie strictly inside the domain; priors are "
            "singular at the endpoints"
        )

    if rule == "explicit":
        if prior is None:
            raise EndpointError("rule 'explicit' requires a prior callable")
        pi = prior
    elif rule in model.priors:
        pi = model.priors[rule]
    elif rule == "general":
        def pi(t, _m=model):
            info = fisher_info(_m, t)
            if info <= 0:
                raise NonLogConcaveError(
                    f"observed information non-positive at theta={t}; "
                    "general-rule prior undefined there",
                    interval=(t, t),
                )
            return math.sqrt(info)
    else:
        raise EndpointError(
            f"rule {rule!r} not registered on this model "
            f"(available: {sorted(model.priors)})"
        )

    ref = model._nll2_checked(model.mle)
    vals = np.empty_like(grid)
    for i, t in enumerate(grid):
        p = float(pi(t))
        if not math.isfinite(p) or p < 0:
            raise EndpointError(f"prior undefined or negative at theta={t}")
        vals[i] = math.exp(-0.5 * (model._nll2_checked(t) - ref)) * p
    return DensityCurve(grid, vals, False).normalize()


# Points dropped per side when a curve is remapped: second-derivative
# estimates next to a grid boundary are unreliable and would otherwise
# contaminate repeated applications.
_ITERATE_TRIM = 3


def jeffreys_iterate(theta_grid, loglik):
    """One step of the information remapping of a log likelihood curve.

    Computes the observed information ``I = -d2 l / d theta2`` along the
    grid and returns the same log-likelihood values over the new
    coordinate ``omega(theta) = integral of sqrt(I)``, anchored to zero at
    the curve's optimum.  Order- and optimum-preserving; a unit-curvature
    quadratic is a fixed point, and the asymmetry of a near-quadratic
    curve is halved (with a sign flip) per application.

    The returned curve is trimmed by a few points per side because
    curvature estimates at a grid boundary are one-sided; without the trim
    their errors would compound under repeated application.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    loglik = np.asarray(loglik, dtype=float)
    if theta_grid.ndim != 1 or theta_grid.shape != loglik.shape:
        raise DomainError("grid and log-likelihood shapes differ")
    if theta_grid.size < 4 * _ITERATE_TRIM:
        raise DomainError("grid too short to estimate curvature")
    if not np.all(np.diff(theta_grid) > 0):
        raise DomainError("grid must be strictly increasing")
    i_opt = int(np.argmax(loglik))
    if not _ITERATE_TRIM <= i_opt < len(loglik) - _ITERATE_TRIM:
        raise DomainError("optimum must be interior to the grid")

    info = -np.gradient(
        np.gradient(loglik, theta_grid, edge_order=2),
        theta_grid,
        edge_order=2,
    )
    k = _ITERATE_TRIM
    bad = np.nonzero(info[k:-k] <= 0)[0]
    if bad.size:
        # report the first contiguous non-positive run
        j = int(bad[0]) + k
        j2 = j
        while j2 + 1 < len(info) - k and info[j2 + 1] <= 0:
            j2 += 1
        raise NonLogConcaveError(
            f"information non-positive on "
            f"[{theta_grid[j]:.6g}, {theta_grid[j2]:.6g}]",
            interval=(float(theta_grid[j]), float(theta_grid[j2])),
        )
    # pin the untrusted boundary estimates so sqrt stays defined there
    info[:k] = info[k]
    info[-k:] = info[-k - 1]
    omega = cumulative_trapezoid(np.sqrt(info), theta_grid, initial=0.0)
    omega -= omega[i_opt]
    return omega[k:-k], loglik[k:-k].copy()
