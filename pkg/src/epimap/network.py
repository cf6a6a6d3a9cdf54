"""Feed-forward sigmoid networks under an honest binomial likelihood.

The cost is ``Q = -2 ln L`` of binary targets given the network outputs,
so cost differences translate directly into log-likelihood ratios and the
z-coordinates used by the remapper.  Weights live in one flat vector
(layer-major, bias last per neuron) so the whole eco-system — training,
remapping, sampling — can treat the network as a plain cost function over
``R^W``.

Row sums inside cost and gradient use a balanced pairwise fold, which
keeps them exactly linear in the sample: duplicating every row doubles
``Q`` and the gradient bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DatasetError, InputError

# Outputs are clamped this far away from {0, 1} before logs; the cost
# diverges at saturated outputs otherwise.
CLIP = 1e-12

__all__ = [
    "Architecture",
    "Network",
    "Dataset",
    "forward",
    "cost",
    "gradient",
    "cost_and_gradient",
    "init_network",
    "save_model",
    "load_model",
    "model_hash",
    "pairwise_rowsum",
]


def pairwise_rowsum(a: np.ndarray) -> np.ndarray:
    """Sum over axis 0 by balanced halving.

    The fold splits at ``ceil(n/2)``, so stacking a block of rows on top
    of an identical block sums each pair first and the result is exactly
    twice the single-block sum.
    """
    a = np.asarray(a, dtype=float)
    while a.shape[0] > 1:
        m = (a.shape[0] + 1) // 2
        head = a[:m].copy()
        head[: a.shape[0] - m] += a[m:]
        a = head
    return a[0]


@dataclass(frozen=True)
class Architecture:
    """Layer widths of a fully connected sigmoid network."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(
            self, "hidden_layers", tuple(int(w) for w in self.hidden_layers)
        )
        widths = (self.input_dim, *self.hidden_layers, self.output_dim)
        if any(w < 1 for w in widths):
            raise DatasetError(f"all layer widths must be >= 1, got {widths}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    @property
    def weight_count(self) -> int:
        sizes = self.layer_sizes
        return sum(
            (fan_in + 1) * fan_out for fan_in, fan_out in zip(sizes, sizes[1:])
        )

    def slices(self):
        """(start, fan_in, fan_out) of each layer's block in the flat
        vector; within a block neurons are contiguous, bias last."""
        out = []
        start = 0
        sizes = self.layer_sizes
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            out.append((start, fan_in, fan_out))
            start += (fan_in + 1) * fan_out
        return out


@dataclass(frozen=True)
class Network:
    """An architecture plus one flat weight vector."""

    arch: Architecture
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (self.arch.weight_count,):
            raise DatasetError(
                f"weight vector has length {theta.shape}, architecture "
                f"needs {self.arch.weight_count}"
            )

    def layer_matrices(self):
        """[(W, b)] per layer with W of shape (fan_out, fan_in)."""
        out = []
        for start, fan_in, fan_out in self.arch.slices():
            block = self.theta[start : start + (fan_in + 1) * fan_out]
            block = block.reshape(fan_out, fan_in + 1)
            out.append((block[:, :fan_in], block[:, fan_in]))
        return out

    def with_theta(self, theta: np.ndarray) -> "Network":
        return Network(self.arch, theta)


@dataclass(frozen=True)
class Dataset:
    """Input rows with binary target rows."""

    inputs: np.ndarray
    targets: np.ndarray
    ids: tuple = field(default=(), compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        t = np.atleast_2d(np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)
        if x.shape[0] == 0:
            raise DatasetError("dataset is empty")
        if x.shape[0] != t.shape[0]:
            raise DatasetError(
                f"{x.shape[0]} input rows vs {t.shape[0]} target rows"
            )
        if not np.all(np.isfinite(x)):
            raise DatasetError("non-finite inputs")
        if not np.isin(t, (0.0, 1.0)).all():
            raise DatasetError("targets must be binary")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def drop_row(self, index: int) -> "Dataset":
        keep = np.arange(len(self)) != index
        return Dataset(self.inputs[keep], self.targets[keep])

    def row(self, index: int):
        return self.inputs[index], self.targets[index]


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _forward_layers(net: Network, x: np.ndarray):
    """Activations per layer, input first, output last."""
    acts = [x]
    for w, b in net.layer_matrices():
        acts.append(_sigmoid(acts[-1] @ w.T + b))
    return acts


def forward(net: Network, x) -> np.ndarray:
    """Deterministic network output for one row or a batch of rows; every
    component lies strictly in (0, 1)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != net.arch.input_dim:
        raise InputError(
            f"expected {net.arch.input_dim} inputs, got {x2.shape[1]}"
        )
    if not np.all(np.isfinite(x2)):
        raise InputError("non-finite input pattern")
    out = _forward_layers(net, x2)[-1]
    return out[0] if single else out


def _row_costs(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    o = np.clip(outputs, CLIP, 1.0 - CLIP)
    terms = targets * np.log(o) + (1.0 - targets) * np.log1p(-o)
    return -2.0 * np.sum(terms, axis=1)


def cost(net: Network, data: Dataset) -> float:
    """``Q = -2 sum_n sum_m [x ln o + (1-x) ln(1-o)] >= 0``.

    An honest ``-2 ln L`` for binary targets, so ``Q`` differences are
    chi-square scaled: a unit change in ``Q`` is one squared z unit.
    """
    outputs = forward(net, data.inputs)
    return float(pairwise_rowsum(_row_costs(outputs, data.targets)))


def cost_and_gradient(net: Network, data: Dataset):
    """One forward/backward pass; returns ``(Q, dQ/dtheta)``.

    The output-layer residual for the clamped cross entropy is
    ``2 (o - x)`` per pre-activation, and hidden deltas follow by the
    chain rule through the sigmoid slope ``o (1 - o)``.
    """
    acts = _forward_layers(net, data.inputs)
    outputs = acts[-1]
    q = float(pairwise_rowsum(_row_costs(outputs, data.targets)))

    layers = net.layer_matrices()
    delta = 2.0 * (outputs - data.targets)
    # the cost clamps outputs before the logs, so entries at the clamp
    # contribute no gradient; keeping them live would promise descent the
    # clamped cost cannot deliver
    delta[(outputs <= CLIP) | (outputs >= 1.0 - CLIP)] = 0.0
    grads: list[np.ndarray] = []
    for layer in range(len(layers) - 1, -1, -1):
        w, _ = layers[layer]
        a_in = acts[layer]
        per_row = np.einsum("no,ni->noi", delta, a_in)
        g_w = pairwise_rowsum(per_row)
        g_b = pairwise_rowsum(delta)
        grads.append(np.concatenate([g_w, g_b[:, None]], axis=1).ravel())
        if layer > 0:
            back = delta @ w
            delta = back * acts[layer] * (1.0 - acts[layer])
    return q, np.concatenate(grads[::-1])


def gradient(net: Network, data: Dataset) -> np.ndarray:
    """Backpropagated ``dQ/dtheta`` as one flat vector."""
    return cost_and_gradient(net, data)[1]


def init_network(arch: Architecture, seed: int) -> Network:
    """Seeded uniform init in [-0.5, 0.5] scaled by 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    parts = []
    for _, fan_in, fan_out in arch.slices():
        block = rng.uniform(-0.5, 0.5, size=(fan_out, fan_in + 1))
        parts.append((block / math.sqrt(fan_in)).ravel())
    return Network(arch, np.concatenate(parts))


LAYOUT_VERSION = 1


def _model_payload(net: Network, normalization, seed, training) -> dict:
    return {
        "architecture": {
            "input_dim": net.arch.input_dim,
            "hidden_layers": list(net.arch.hidden_layers),
            "output_dim": net.arch.output_dim,
        },
        "layout_version": LAYOUT_VERSION,
        "weights": [float(w) for w in net.theta],
        "normalization": normalization,
        "seed": seed,
        "training": training,
    }


def model_hash(net: Network, normalization=None) -> str:
    payload = _model_payload(net, normalization, None, None)
    payload.pop("training")
    payload.pop("seed")
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_model(path, net: Network, *, normalization=None, seed=None,
               training=None) -> None:
    """Write the model file: architecture, layout version, flat weights,
    input-normalization metadata and training summary."""
    with open(path, "w") as fh:
        json.dump(
            _model_payload(net, normalization, seed, training), fh, indent=1
        )
        fh.write("\n")


def load_model(path):
    """Read a model file; returns ``(net, meta)`` where meta holds the
    normalization, seed and training entries."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("layout_version") != LAYOUT_VERSION:
        raise InputError(
            f"unsupported weight layout version {payload.get('layout_version')}"
        )
    arch = Architecture(
        payload["architecture"]["input_dim"],
        tuple(payload["architecture"]["hidden_layers"]),
        payload["architecture"]["output_dim"],
    )
    net = Network(arch, np.array(payload["weights"], dtype=float))
    meta = {
        "normalization": payload.get("normalization"),
        "seed": payload.get("seed"),
        "training": payload.get("training"),
    }
    return net, meta
