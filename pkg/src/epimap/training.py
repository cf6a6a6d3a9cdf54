"""Full optimisation of the network cost.

Training runs a sign-based resilient-propagation phase on the whole
dataset, then refines with nonlinear conjugate gradient (Polak-Ribiere
with a safeguarded secant line search, exact on quadratics).  Budgets are
counted in cost-function evaluations; one evaluation yields both the cost
and its gradient.

There is deliberately no early stopping: downstream uncertainty mapping
assumes the returned weights sit at a genuine optimum, so the trainer
reports a ``fully_optimised`` flag from the final gradient norm and the
remapper refuses to run without it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigError, DivergenceError
from .network import Dataset, Network, cost_and_gradient, init_network

__all__ = [
    "RpropParams",
    "TrainConfig",
    "RpropState",
    "rprop_step",
    "minimize_rprop",
    "minimize_cg",
    "cg_refine",
    "train",
    "TrainResult",
]

# Gradient infinity-norm targets: stop early below the first, accept the
# optimum as fully optimised below the second (scaled by 1 + Q).
GRAD_TARGET = 1e-6
GRAD_ACCEPT = 1e-4

# Divergence guard: error out if the cost sits above this multiple of the
# starting cost for this many consecutive evaluations.
_DIVERGE_FACTOR = 10.0
_DIVERGE_PATIENCE = 200


@dataclass(frozen=True)
class RpropParams:
    delta0: float = 0.1
    delta_min: float = 1e-8
    delta_max: float = 1.0
    eta_up: float = 1.2
    eta_down: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.eta_down < 1.0 < self.eta_up:
            raise ConfigError(
                f"need 0 < eta_down < 1 < eta_up, got "
                f"{self.eta_down}, {self.eta_up}"
            )
        if not self.delta_min < self.delta0 < self.delta_max:
            raise ConfigError(
                f"need delta_min < delta0 < delta_max, got "
                f"{self.delta_min}, {self.delta0}, {self.delta_max}"
            )


@dataclass(frozen=True)
class TrainConfig:
    rprop: RpropParams = field(default_factory=RpropParams)
    rprop_evals: int = 20_000
    cg_evals: int = 1_000
    seed: int = 0

    def __post_init__(self):
        if self.rprop_evals < 0 or self.cg_evals < 0:
            raise ConfigError("evaluation budgets must be >= 0")


@dataclass
class RpropState:
    """Per-weight adaptive steps plus the sign memory and last update."""

    theta: np.ndarray
    delta: np.ndarray
    prev_grad: np.ndarray
    prev_step: np.ndarray
    params: RpropParams

    @classmethod
    def fresh(cls, theta: np.ndarray, params: RpropParams) -> "RpropState":
        n = len(theta)
        return cls(
            theta=np.array(theta, dtype=float),
            delta=np.full(n, params.delta0),
            prev_grad=np.zeros(n),
            prev_step=np.zeros(n),
            params=params,
        )


def rprop_step(state: RpropState, grad: np.ndarray) -> RpropState:
    """One resilient-propagation update.

    Step sizes grow by ``eta_up`` where the gradient sign repeats and
    shrink by ``eta_down`` where it flips; a flip also retracts the
    previous update and clears the sign memory.  Weights move opposite
    the current gradient sign; a zero gradient component leaves both the
    weight and its step untouched.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient in rprop step", trace=None)
    p = state.params
    prod = state.prev_grad * grad
    pos, neg = prod > 0, prod < 0

    delta = state.delta.copy()
    delta[pos] = np.minimum(delta[pos] * p.eta_up, p.delta_max)
    delta[neg] = np.maximum(delta[neg] * p.eta_down, p.delta_min)

    step = -np.sign(grad) * delta
    step[neg] = -state.prev_step[neg]  # retract the flipped update
    theta = state.theta + step

    kept_grad = grad.copy()
    kept_grad[neg] = 0.0
    return RpropState(theta, delta, kept_grad, step, p)


def minimize_rprop(fn, theta0, max_evals: int, params: RpropParams):
    """Drive :func:`rprop_step` for ``max_evals`` cost evaluations.

    ``fn(theta) -> (q, grad)``.  Returns the best iterate seen, the
    cost-per-evaluation trace, and the final gradient.
    """
    state = RpropState.fresh(theta0, params)
    trace: list[float] = []
    q, g = fn(state.theta)
    trace.append(q)
    best_q, best_theta, best_g = q, state.theta.copy(), g
    high = 0
    for _ in range(max_evals - 1):
        state = rprop_step(state, g)
        q, g = fn(state.theta)
        trace.append(q)
        if q < best_q:
            best_q, best_theta, best_g = q, state.theta.copy(), g
        if q > _DIVERGE_FACTOR * (trace[0] + 1.0):
            high += 1
            if high >= _DIVERGE_PATIENCE:
                raise DivergenceError(
                    f"cost stuck at {q:.3g}, {_DIVERGE_PATIENCE} evaluations "
                    f"above {_DIVERGE_FACTOR} x initial",
                    trace=np.array(trace),
                )
        else:
            high = 0
        if np.max(np.abs(g)) <= GRAD_TARGET:
            break
    return best_theta, best_q, best_g, trace


def _line_search(fn, x, f0, g0, d, init_alpha, trace, max_evals,
                 c1=1e-4, c2=0.01, max_ls=8):
    """Safeguarded secant search on the directional derivative.

    Returns ``(alpha, f, g, evals_used)`` satisfying the strong Wolfe
    conditions when possible, else the best point with simple decrease;
    ``alpha`` is None on failure.  On a quadratic the first secant step
    lands on the exact minimiser.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        return None, f0, g0, 0
    a_prev, dphi_prev = 0.0, dphi0
    a = init_alpha
    lo, hi = 0.0, math.inf
    best = None  # (f, a, g)
    evals = 0
    for _ in range(max_ls):
        if evals >= max_evals:
            break
        f_a, g_a = fn(x + a * d)
        trace.append(f_a)
        evals += 1
        dphi_a = float(g_a @ d)
        armijo = f_a <= f0 + c1 * a * dphi0
        if armijo and abs(dphi_a) <= c2 * abs(dphi0):
            return a, f_a, g_a, evals
        if armijo and (best is None or f_a < best[0]):
            best = (f_a, a, g_a)
        # maintain a bracket around the minimiser
        if not armijo or dphi_a > 0:
            hi = min(hi, a)
        else:
            lo = max(lo, a)
        denom = dphi_a - dphi_prev
        a_new = a - dphi_a * (a - a_prev) / denom if denom != 0 else math.nan
        a_prev, dphi_prev = a, dphi_a
        if not math.isfinite(a_new) or not (lo < a_new < hi):
            a_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * a
        a = a_new
    if best is not None:
        f_b, a_b, g_b = best
        return a_b, f_b, g_b, evals
    return None, f0, g0, evals


def minimize_cg(fn, theta0, max_evals: int, gtol: float = GRAD_TARGET,
                max_iters: int | None = None):
    """Polak-Ribiere conjugate gradient with restart-on-failure.

    ``fn(theta) -> (q, grad)``.  The cost never increases across accepted
    line searches; the near-exact line search makes the method finitely
    convergent on quadratics.  A failed line search restarts once along
    steepest descent; a second failure sets the ``line_search_failed``
    flag.  Returns ``(theta, info)`` where info carries the trace, final
    cost and gradient, iteration count and flags.
    """
    x = np.array(theta0, dtype=float)
    trace: list[float] = []
    f, g = fn(x)
    trace.append(f)
    evals = 1
    d = -g
    alpha_prev = None
    restarted = failed = False
    iters = 0
    while evals < max_evals and np.max(np.abs(g)) > gtol:
        if max_iters is not None and iters >= max_iters:
            break
        gg = float(g @ g)
        if gg == 0.0:
            break
        init = alpha_prev if alpha_prev else min(1.0, 2.0 * (abs(f) + 1.0) / gg)
        a, f_new, g_new, used = _line_search(
            fn, x, f, g, d, init, trace, max_evals - evals
        )
        evals += used
        if a is None:
            if not restarted:
                restarted = True
                d = -g
                alpha_prev = None
                continue
            failed = True
            break
        x = x + a * d
        beta = max(0.0, float(g_new @ (g_new - g)) / gg)
        d_new = -g_new + beta * d
        if float(g_new @ d_new) >= 0:
            d_new = -g_new
        f, g, d = f_new, g_new, d_new
        alpha_prev = a
        iters += 1
    info = {
        "trace": trace,
        "q": f,
        "grad": g,
        "grad_inf": float(np.max(np.abs(g))),
        "iterations": iters,
        "evals": evals,
        "line_search_failed": failed,
    }
    return x, info


@dataclass(frozen=True)
class TrainResult:
    network: Network
    trace: np.ndarray
    q_final: float
    grad_inf: float
    fully_optimised: bool
    evals_used: int
    config: TrainConfig

    def training_meta(self) -> dict:
        return {
            "q_final": self.q_final,
            "grad_inf": self.grad_inf,
            "fully_optimised": self.fully_optimised,
            "evals_used": self.evals_used,
            "rprop_evals": self.config.rprop_evals,
            "cg_evals": self.config.cg_evals,
        }


def cg_refine(net: Network, data: Dataset, evals: int) -> Network:
    """Conjugate-gradient polish of an existing network."""
    fn = lambda th: cost_and_gradient(net.with_theta(th), data)
    theta, _ = minimize_cg(fn, net.theta, evals)
    return net.with_theta(theta)


def train(
    net: Network | None,
    data: Dataset,
    config: TrainConfig = TrainConfig(),
    arch=None,
) -> TrainResult:
    """Resilient propagation followed by conjugate-gradient refinement.

    Either pass a starting network or an architecture (seeded init).  The
    returned cost never exceeds the starting cost, the trace records Q for
    every evaluation, and ``fully_optimised`` flags whether the final
    gradient max-norm fell below ``1e-4 * (1 + Q)`` — the gate for all
    remapping downstream.
    """
    if net is None:
        if arch is None:
            raise ConfigError("pass a network or an architecture")
        net = init_network(arch, config.seed)
    fn = lambda th: cost_and_gradient(net.with_theta(th), data)

    theta, q, g, trace = (
        minimize_rprop(fn, net.theta, config.rprop_evals, config.rprop)
        if config.rprop_evals
        else (net.theta, *fn(net.theta), [])
    )
    if config.rprop_evals == 0:
        q, g = fn(theta)
        trace = [q]

    if config.cg_evals and np.max(np.abs(g)) > GRAD_TARGET:
        theta_cg, info = minimize_cg(fn, theta, config.cg_evals)
        if info["q"] <= q:
            theta, q, g = theta_cg, info["q"], info["grad"]
        trace = trace + info["trace"]

    grad_inf = float(np.max(np.abs(g)))
    return TrainResult(
        network=net.with_theta(theta),
        trace=np.asarray(trace),
        q_final=float(q),
        grad_inf=grad_inf,
        fully_optimised=grad_inf <= GRAD_ACCEPT * (1.0 + q),
        evals_used=len(trace),
        config=config,
    )
