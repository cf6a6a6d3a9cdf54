"""Per-weight Gaussian remapping of a trained cost function.

Around a genuine optimum the cost ``Q = -2 ln L`` defines, for each
weight, a coordinate ``z`` in which the likelihood is exactly Gaussian:
displacing the weight to ``theta(z)`` changes the cost by ``z**2``.  The
map is built purely by inspecting the cost:

* :func:`find_scale` finds the displacement producing a unit-scale change
  in the symmetrised cost,
* :func:`build_zmap` probes three cost levels per side, fits a monotone
  cubic inverse ``theta(z)`` and verifies it against the cost on a z grid,
  trimming the valid range where the quadratic picture breaks down (a
  plateau side keeps a finite limit for rejection sampling downstream),
* :func:`offdiag` estimates each cross term of the inverse covariance
  from four joint displacements,
* :func:`eigen_floor` makes the assembled matrix safely positive by
  flooring small eigenvalues, backing a stable Mahalanobis form.

Everything is counted in cost evaluations: a ~25-weight network remaps
with roughly two thousand of them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .exceptions import (
    ConfigError,
    NotOptimisedError,
    ProbeError,
    SplineProbeError,
    UnconstrainedParameterError,
)
from .network import Dataset, Network, cost, model_hash

__all__ = [
    "RemapConfig",
    "CountingCost",
    "ZMap",
    "InverseCovariance",
    "find_scale",
    "build_zmap",
    "offdiag",
    "eigen_floor",
    "mahalanobis",
    "RemapResult",
    "remap_cost",
    "remap_network",
    "asymmetry_curves",
    "save_remap",
    "load_remap",
]


@dataclass(frozen=True)
class RemapConfig:
    """Probe levels and safeguards; defaults follow the budget of a
    small-network remap."""

    knot_targets: tuple[float, ...] = (0.5, 1.5, 3.0)
    verify_z_max: float = 5.0
    verify_z_step: float = 0.5
    residual_tol: float = 0.1
    # plateau valleys this deep below the optimum are treated as flat;
    # deeper dips mean the optimum is misplaced and raise an error
    dip_tolerance: float = 0.15
    scale_band: tuple[float, float] = (0.5, 2.0)
    scale_max_evals: int = 10
    knot_max_evals: int = 20
    verify_max_evals: int = 20
    offdiag_cap: float = 1.0
    offdiag_trunc: float = 0.95
    floor_ratio: float = 0.001
    flat_search_factor: float = 1e6

    def __post_init__(self):
        lo, hi = self.scale_band
        if not 0 < lo < hi:
            raise ConfigError(f"bad scale band ({lo}, {hi})")
        if self.residual_tol <= 0 or self.verify_z_step <= 0:
            raise ConfigError("verification settings must be positive")
        if not 0 < self.offdiag_trunc < 1:
            raise ConfigError("off-diagonal truncation must lie in (0, 1)")
        if not 0 < self.floor_ratio < 1:
            raise ConfigError("eigenvalue floor ratio must lie in (0, 1)")


class CountingCost:
    """Wrap a cost callable and count evaluations."""

    def __init__(self, fn):
        self._fn = fn
        self.count = 0

    def __call__(self, theta) -> float:
        self.count += 1
        return float(self._fn(theta))


def network_cost_fn(net: Network, data: Dataset):
    """Plain ``theta -> Q`` closure over a network and its dataset."""
    return lambda theta: cost(net.with_theta(theta), data)


@dataclass(frozen=True)
class ZMap:
    """Monotone cubic inverse map ``theta_w(z)`` for one weight.

    ``theta(0)`` is the optimum weight value; within ``[z_lo, z_hi]`` the
    cost change at ``theta(z)`` tracks ``z**2`` to the verification
    tolerance.  A side the cost cannot constrain keeps a finite limit.
    """

    index: int
    delta: float
    z_knots: np.ndarray
    theta_knots: np.ndarray
    z_lo: float
    z_hi: float
    verified: bool
    _spline: PchipInterpolator = field(
        default=None, repr=False, compare=False
    )

    _linear: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        zk = np.asarray(self.z_knots, dtype=float)
        tk = np.asarray(self.theta_knots, dtype=float)
        object.__setattr__(self, "z_knots", zk)
        object.__setattr__(self, "theta_knots", tk)
        if not np.all(np.diff(zk) > 0):
            raise SplineProbeError("z knots must strictly increase", probes=zk)
        steps = np.diff(tk)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise SplineProbeError(
                "theta knots must be strictly monotone", probes=tk
            )
        if self._spline is None:
            object.__setattr__(
                self, "_spline", PchipInterpolator(zk, tk, extrapolate=True)
            )
        # collinear knots admit an exact linear evaluation, much cheaper
        # inside sampling loops
        slope = (tk[-1] - tk[0]) / (zk[-1] - zk[0])
        icept = tk[0] - slope * zk[0]
        scale = max(abs(tk[0]), abs(tk[-1]), 1e-30)
        if np.max(np.abs(icept + slope * zk - tk)) <= 1e-12 * scale:
            object.__setattr__(self, "_linear", (float(slope), float(icept)))

    @property
    def theta0(self) -> float:
        if self._linear is not None:
            return self._linear[1]
        return float(self._spline(0.0))

    def theta(self, z):
        """Absolute weight value reaching the requested z."""
        if self._linear is not None:
            slope, icept = self._linear
            return icept + slope * z
        return self._spline(z)

    def displacement(self, z):
        if self._linear is not None:
            return self._linear[0] * z
        return self._spline(z) - self.theta0

    def in_range(self, z) -> bool:
        return self.z_lo <= z <= self.z_hi

    @classmethod
    def identity(cls, index: int, theta0: float = 0.0, scale: float = 1.0,
                 z_lo: float = -math.inf, z_hi: float = math.inf) -> "ZMap":
        """Linear map ``theta = theta0 + scale * z``; handy for synthetic
        quadratic costs whose weights already are z coordinates."""
        zk = np.array([-3.0, -1.5, 0.0, 1.5, 3.0])
        return cls(
            index=index,
            delta=scale,
            z_knots=zk,
            theta_knots=theta0 + scale * zk,
            z_lo=z_lo,
            z_hi=z_hi,
            verified=True,
        )


def _axis_dq(cost_fn, theta0, q0, w):
    base = np.array(theta0, dtype=float)

    def dq(d: float) -> float:
        probe = base.copy()
        probe[w] += d
        return cost_fn(probe) - q0

    return dq


def find_scale(cost_fn, theta0, q0: float, w: int,
               config: RemapConfig = RemapConfig(),
               init: float | None = None) -> float:
    """Displacement of weight ``w`` producing a unit-scale change in the
    symmetrised cost ``(Q(+d) + Q(-d))/2 - Q0``.

    Multiplicative search under a quadratic model; lands in the
    acceptance band within the evaluation budget.  A cost still flat at
    a million times the initial guess raises
    :class:`UnconstrainedParameterError`.
    """
    dq = _axis_dq(cost_fn, theta0, q0, w)
    d = init if init is not None else 0.1 * max(1.0, abs(theta0[w]))
    lo, hi = config.scale_band
    history = []
    d_small = d_big = None  # bracket: too-flat and too-steep displacements
    for _ in range(max(config.scale_max_evals // 2, 1)):
        s = 0.5 * (dq(+d) + dq(-d))
        history.append((d, s))
        if lo <= s <= hi:
            return d
        if not math.isfinite(s) or s < 1e-12:
            d_small = d
            d *= 8.0
        else:
            if s < lo:
                d_small = d if d_small is None else max(d_small, d)
            else:
                d_big = d if d_big is None else min(d_big, d)
            if d_small is not None and d_big is not None:
                # bracketed: geometric bisection is immune to the cost
                # being steeper or flatter than quadratic
                d = math.sqrt(d_small * d_big)
            else:
                d *= min(8.0, max(0.125, math.sqrt(1.0 / s)))
        if d > config.flat_search_factor * (init or 0.1):
            raise UnconstrainedParameterError(
                f"weight {w}: cost flat out to {d:.3g}; "
                "the data do not constrain this parameter"
            )
    raise SplineProbeError(
        f"weight {w}: scale search did not settle", probes=history
    )


def _probe_side(dq, sign: float, delta: float, targets, max_evals: int,
                dip_tolerance: float = 0.15):
    """All measured ``(displacement, cost change)`` pairs on one side,
    chasing the target levels under a local quadratic model.

    Long shallow valleys below the optimum (within ``dip_tolerance``) are
    treated as flat plateau; a deeper dip means the claimed optimum is
    not one and raises."""
    probes: list[tuple[float, float]] = []
    evals = 0
    d = delta
    plateau_q = None
    for target in targets:
        if probes and probes[-1][1] > 0:
            d_ref, q_ref = max(probes)
            d = d_ref * min(8.0, max(0.125, math.sqrt(target / q_ref)))
        for _ in range(3):
            if evals >= max_evals:
                return probes, evals
            q = dq(sign * d)
            evals += 1
            if q < -dip_tolerance:
                raise SplineProbeError(
                    f"cost fell {-q:.3g} below the optimum at displacement "
                    f"{sign * d:.4g}",
                    probes=probes + [(d, q)],
                )
            q = max(q, 0.0)
            grown = probes and d > max(p[0] for p in probes) * 2.0
            stalled = probes and q <= max(p[1] for p in probes) * (1 + 1e-9)
            if grown and stalled:
                plateau_q = q  # flat side: cost no longer responds
                break
            probes.append((d, q))
            if 0.6 * target <= q <= 1.5 * target:
                break
            factor = math.sqrt(target / q) if q > 1e-9 else 8.0
            d *= min(8.0, max(0.25, factor))
        if plateau_q is not None:
            break
    return probes, evals


def _select_knots(probes, targets):
    """At most one probe per target level, nearest in log cost change,
    thinned to strictly increasing cost along the displacement."""
    chosen = []
    used = set()
    for target in targets:
        best = None
        for i, (d, q) in enumerate(probes):
            if i in used or q <= 1e-12:
                continue
            gap = abs(math.log(q / target))
            if best is None or gap < best[0]:
                best = (gap, i)
        if best is not None:
            used.add(best[1])
            chosen.append(probes[best[1]])
    chosen = sorted(set(chosen))
    out = []
    for d, q in chosen:
        if out and q <= out[-1][1]:
            if q < out[-1][1] * (1.0 - 1e-6):
                raise SplineProbeError(
                    "cost decreased with growing displacement", probes=probes
                )
            continue
        out.append((d, q))
    return out


def build_zmap(cost_fn, theta0, q0: float, w: int, delta: float,
               config: RemapConfig = RemapConfig()) -> ZMap:
    """Probe the cost around the optimum and fit the inverse map for one
    weight.

    Three probe points per side target cost changes of about half, one
    and a half and three; each measured pair contributes a knot at
    ``z = sign * sqrt(dQ)``.  A shape-preserving cubic through the knots
    (plus the origin) gives ``theta(z)``; walking a z grid out to the
    verification maximum trims ``[z_lo, z_hi]`` to the span where
    ``|dQ(theta(z)) - z**2|`` stays within tolerance.
    """
    dq = _axis_dq(cost_fn, theta0, q0, w)
    per_side = max(config.knot_max_evals // 2, 3)
    pos, _ = _probe_side(
        dq, +1.0, delta, config.knot_targets, per_side, config.dip_tolerance
    )
    neg, _ = _probe_side(
        dq, -1.0, delta, config.knot_targets, per_side, config.dip_tolerance
    )
    pos = _select_knots(pos, config.knot_targets)
    neg = _select_knots(neg, config.knot_targets)

    z_knots = [0.0]
    t_knots = [theta0[w]]
    for d, q in pos:
        z_knots.append(math.sqrt(q))
        t_knots.append(theta0[w] + d)
    for d, q in neg:
        z_knots.insert(0, -math.sqrt(q))
        t_knots.insert(0, theta0[w] - d)
    if len(z_knots) < 3:
        raise SplineProbeError(
            f"weight {w}: not enough usable probes", probes=(pos, neg)
        )
    zmap = ZMap(
        index=w,
        delta=delta,
        z_knots=np.array(z_knots),
        theta_knots=np.array(t_knots),
        z_lo=0.0,
        z_hi=0.0,
        verified=False,
    )

    # verification walk, half the budget per side
    per_side_verify = max(config.verify_max_evals // 2, 1)
    grid = config.verify_z_step * np.arange(1, per_side_verify + 1)
    grid = grid[grid <= config.verify_z_max + 1e-12]

    def side_limit(sign: float) -> float:
        first_fail = None
        passed = 0.0
        for z in sign * grid:
            resid = abs(dq(float(zmap.displacement(z))) - z * z)
            if resid <= config.residual_tol:
                passed = abs(z)
            else:
                first_fail = abs(z)
                break
        limit = passed
        # measured knots below the first failure are exact by construction
        side_knots = np.abs(zmap.z_knots[np.sign(zmap.z_knots) == sign])
        for zk in side_knots:
            if first_fail is None or zk < first_fail:
                limit = max(limit, zk)
        return sign * limit

    z_hi = side_limit(+1.0)
    z_lo = side_limit(-1.0)
    return ZMap(
        index=w,
        delta=delta,
        z_knots=zmap.z_knots,
        theta_knots=zmap.theta_knots,
        z_lo=float(z_lo),
        z_hi=float(z_hi),
        verified=True,
    )


def offdiag(cost_fn, theta0, q0: float, map_w: ZMap, map_v: ZMap,
            config: RemapConfig = RemapConfig()) -> float:
    """Cross term of the inverse covariance for one weight pair.

    Four joint displacements at ``z = +-Delta`` on both coordinates give
    the least-squares quadratic cross coefficient
    ``(Q++ - Q+- - Q-+ + Q--) / (8 Delta^2)``, insensitive to the exact
    optimum location.  ``Delta`` is capped by both valid ranges and the
    configured probe level; the estimate is truncated to the configured
    band inside (-1, 1).
    """
    base = np.array(theta0, dtype=float)
    delta = min(
        config.offdiag_cap,
        abs(map_w.z_lo), map_w.z_hi, abs(map_v.z_lo), map_v.z_hi,
    )
    if delta <= 1e-3:
        return 0.0

    def four_point(d: float) -> float:
        acc = 0.0
        for sw in (+1.0, -1.0):
            for sv in (+1.0, -1.0):
                probe = base.copy()
                probe[map_w.index] += map_w.displacement(sw * d)
                probe[map_v.index] += map_v.displacement(sv * d)
                q = cost_fn(probe) - q0
                if not math.isfinite(q):
                    raise ProbeError(
                        f"non-finite cost at joint probe of weights "
                        f"{map_w.index}, {map_v.index}"
                    )
                acc += sw * sv * q
        return acc / (8.0 * d * d)

    try:
        m = four_point(delta)
    except ProbeError:
        m = four_point(delta / 2.0)
    return float(np.clip(m, -config.offdiag_trunc, config.offdiag_trunc))


@dataclass(frozen=True)
class InverseCovariance:
    """Symmetric unit-diagonal quadratic form over z space, held through
    its floored eigendecomposition."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    floor_ratio: float
    raw_eigenvalues: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def floored(self) -> bool:
        return bool(np.any(self.raw_eigenvalues != self.eigenvalues))


def eigen_floor(m: np.ndarray, floor_ratio: float = 0.001) -> InverseCovariance:
    """Symmetric eigendecomposition with a relative eigenvalue floor.

    Eigenvalues below ``floor_ratio`` times the largest are raised to
    that floor, which keeps the quadratic form positive definite for
    near-singular matrices.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"matrix must be square, got {m.shape}")
    if not np.allclose(m, m.T, atol=1e-12):
        raise ConfigError("matrix must be symmetric")
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    floor = floor_ratio * vals[0]
    if floor <= 0:
        raise ConfigError("largest eigenvalue must be positive")
    floored = np.maximum(vals, floor)
    return InverseCovariance(
        matrix=m,
        eigenvalues=floored,
        eigenvectors=vecs,
        floor_ratio=floor_ratio,
        raw_eigenvalues=vals,
    )


def mahalanobis(ic: InverseCovariance, z) -> float:
    """``sum_k lambda_k (e_k . z)^2`` with the floored eigenvalues; equals
    ``z' M z`` exactly when no flooring occurred, and is always >= 0."""
    z = np.asarray(z, dtype=float)
    if z.shape != (ic.dim,):
        raise ConfigError(f"z has shape {z.shape}, expected ({ic.dim},)")
    proj = ic.eigenvectors.T @ z
    return float(np.sum(ic.eigenvalues * proj * proj))


@dataclass(frozen=True)
class RemapResult:
    maps: tuple[ZMap, ...]
    ic: InverseCovariance
    n_evaluations: int
    model_digest: str
    q0: float

    @property
    def dim(self) -> int:
        return len(self.maps)


def remap_cost(cost_fn, theta0, config: RemapConfig = RemapConfig(),
               digest: str = "") -> RemapResult:
    """Full remap of an arbitrary cost function around its optimum:
    per-coordinate maps, inverse covariance and floored decomposition."""
    counter = CountingCost(cost_fn)
    theta0 = np.array(theta0, dtype=float)
    q0 = counter(theta0)

    maps = []
    for w in range(len(theta0)):
        delta = find_scale(counter, theta0, q0, w, config)
        maps.append(build_zmap(counter, theta0, q0, w, delta, config))

    dim = len(maps)
    m = np.eye(dim)
    for a in range(dim):
        for b in range(a + 1, dim):
            m[a, b] = m[b, a] = offdiag(
                counter, theta0, q0, maps[a], maps[b], config
            )
    ic = eigen_floor(m, config.floor_ratio)
    return RemapResult(
        maps=tuple(maps),
        ic=ic,
        n_evaluations=counter.count,
        model_digest=digest,
        q0=q0,
    )


def remap_network(
    net: Network,
    data: Dataset,
    *,
    fully_optimised: bool,
    config: RemapConfig = RemapConfig(),
) -> RemapResult:
    """Build every weight map and the full inverse covariance for a
    trained network.

    Refuses to run unless the training gate passed: a partially optimised
    cost carries no information about parameter constraints.
    """
    if not fully_optimised:
        raise NotOptimisedError(
            "network is not flagged fully optimised; remapping a partially "
            "optimised cost is meaningless"
        )
    return remap_cost(
        network_cost_fn(net, data),
        net.theta,
        config,
        digest=model_hash(net),
    )


def asymmetry_curves(cost_fn, theta0, q0: float, maps, n_points: int = 21,
                     span: float = 3.0):
    """Cost change per weight before and after mapping.

    Returns ``(u, pre, z, post)``: ``pre[w]`` is the raw cost change at
    displacements ``u * delta_w`` and ``post[w]`` the cost change at
    ``theta(z)`` across the valid range.  Post-map curves track ``z**2``
    wherever the map verified.
    """
    u = np.linspace(-span, span, n_points)
    pre = np.empty((len(maps), n_points))
    z_grid = np.empty((len(maps), n_points))
    post = np.empty((len(maps), n_points))
    base = np.array(theta0, dtype=float)
    for k, zmap in enumerate(maps):
        w = zmap.index
        for j, uu in enumerate(u):
            probe = base.copy()
            probe[w] += uu * zmap.delta
            pre[k, j] = cost_fn(probe) - q0
        zs = np.linspace(zmap.z_lo, zmap.z_hi, n_points)
        z_grid[k] = zs
        for j, zz in enumerate(zs):
            probe = base.copy()
            probe[w] += zmap.displacement(zz)
            post[k, j] = cost_fn(probe) - q0
    return u, pre, z_grid, post


def save_remap(path, result: RemapResult, config: RemapConfig) -> None:
    payload = {
        "model_hash": result.model_digest,
        "q0": result.q0,
        "n_evaluations": result.n_evaluations,
        "floor_ratio": config.floor_ratio,
        "weights": [
            {
                "index": m.index,
                "delta": m.delta,
                "z_knots": [float(v) for v in m.z_knots],
                "theta_knots": [float(v) for v in m.theta_knots],
                "z_lo": m.z_lo,
                "z_hi": m.z_hi,
                "verified": m.verified,
            }
            for m in result.maps
        ],
        "matrix": [float(v) for v in result.ic.matrix.ravel()],
        "eigenvalues": [float(v) for v in result.ic.eigenvalues],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_remap(path) -> RemapResult:
    with open(path) as fh:
        payload = json.load(fh)
    maps = tuple(
        ZMap(
            index=entry["index"],
            delta=entry["delta"],
            z_knots=np.array(entry["z_knots"]),
            theta_knots=np.array(entry["theta_knots"]),
            z_lo=entry["z_lo"],
            z_hi=entry["z_hi"],
            verified=entry["verified"],
        )
        for entry in payload["weights"]
    )
    dim = len(maps)
    matrix = np.array(payload["matrix"], dtype=float).reshape(dim, dim)
    ic = eigen_floor(matrix, payload["floor_ratio"])
    return RemapResult(
        maps=maps,
        ic=ic,
        n_evaluations=payload["n_evaluations"],
        model_digest=payload["model_hash"],
        q0=payload["q0"],
    )
