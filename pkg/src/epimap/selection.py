"""Architecture comparison: information criterion and leave-one-out.

Both scores are deliberately simple.  The information criterion adds
twice the weight count to the mean final training cost; leave-one-out
retrains once per row and scores the held-out row by squared difference.
No automatic winner is declared — the report is a table.

Fold seeds derive from a content hash of the held-out row and training
rows are canonically ordered by content hash, so permuting the dataset
permutes the per-fold scores and changes nothing else, bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DatasetError, DivergenceError
from .network import Architecture, Dataset, forward
from .training import TrainConfig, train

__all__ = [
    "aic",
    "squared_error_score",
    "loo_cv",
    "LooResult",
    "compare_architectures",
    "SelectionReport",
]

# Weight counts beyond this are flagged as underdetermined for cohort-sized
# datasets (about a hundred rows).
UNTENABLE_WEIGHTS = 55


def aic(q_bar: float, n_params: int) -> float:
    """Mean final cost plus twice the parameter count."""
    if n_params < 0:
        raise ConfigError(f"parameter count must be >= 0, got {n_params}")
    return float(q_bar) + 2.0 * n_params


def squared_error_score(outputs, targets) -> float:
    """Sum over classes of the squared output-target difference."""
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    return float(np.sum((outputs - targets) ** 2))


def _row_digest(x_row, t_row) -> bytes:
    return hashlib.sha256(
        np.ascontiguousarray(x_row).tobytes()
        + np.ascontiguousarray(t_row).tobytes()
    ).digest()


def _fold_seed(global_seed: int, digest: bytes) -> int:
    h = hashlib.sha256(str(global_seed).encode() + digest).digest()
    return int.from_bytes(h[:8], "big")


@dataclass(frozen=True)
class LooResult:
    score: float
    per_fold: np.ndarray
    flagged: np.ndarray
    score_converged_only: float

    @property
    def n_flagged(self) -> int:
        return int(np.sum(self.flagged))


def loo_cv(
    arch: Architecture,
    data: Dataset,
    config: TrainConfig = TrainConfig(),
) -> LooResult:
    """Leave-one-out squared-difference score.

    Trains ``len(data)`` networks, each with one row held out, and scores
    that row.  Folds whose training did not reach the fully-optimised gate
    are flagged; the score is reported both with and without them.
    """
    n = len(data)
    if n < 2:
        raise DatasetError("leave-one-out needs at least two rows")

    digests = [
        _row_digest(data.inputs[i], data.targets[i]) for i in range(n)
    ]
    canon = sorted(range(n), key=lambda i: digests[i])
    scores = np.empty(n)
    flagged = np.zeros(n, dtype=bool)
    for i in range(n):
        train_order = [j for j in canon if j != i]
        fold_data = Dataset(
            data.inputs[train_order], data.targets[train_order]
        )
        fold_config = TrainConfig(
            rprop=config.rprop,
            rprop_evals=config.rprop_evals,
            cg_evals=config.cg_evals,
            seed=_fold_seed(config.seed, digests[i]),
        )
        try:
            result = train(None, fold_data, fold_config, arch=arch)
        except DivergenceError:
            flagged[i] = True
            scores[i] = np.nan
            continue
        flagged[i] = not result.fully_optimised
        x, t = data.row(i)
        scores[i] = squared_error_score(forward(result.network, x), t)
    ok = ~np.isnan(scores)
    keep = ok & ~flagged
    return LooResult(
        score=float(np.mean(scores[ok])),
        per_fold=scores,
        flagged=flagged,
        score_converged_only=(
            float(np.mean(scores[keep])) if np.any(keep) else float("nan")
        ),
    )


@dataclass(frozen=True)
class ArchReport:
    arch: Architecture
    weight_count: int
    q_per_seed: tuple[float, ...]
    aic_per_seed: tuple[float, ...]
    q_bar: float
    aic_of_mean: float
    loo_per_seed: tuple[float, ...] | None

    def label(self) -> str:
        return "x".join(str(w) for w in self.arch.hidden_layers)


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[ArchReport, ...]
    seeds: tuple[int, ...]

    def to_json(self) -> str:
        payload = {
            "seeds": list(self.seeds),
            "q_bar_definition": "mean over seeds of the full-data final cost",
            "architectures": [
                {
                    "hidden_layers": list(r.arch.hidden_layers),
                    "weight_count": r.weight_count,
                    "q_final_per_seed": list(r.q_per_seed),
                    "aic_per_seed": list(r.aic_per_seed),
                    "q_bar_over_seeds": r.q_bar,
                    "aic_of_q_bar": r.aic_of_mean,
                    "loo_per_seed": (
                        list(r.loo_per_seed) if r.loo_per_seed else None
                    ),
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, indent=1)

    def to_csv(self) -> str:
        lines = ["arch,weights,seed,q_final,aic,loo"]
        for r in self.rows:
            for k, seed in enumerate(self.seeds):
                loo = "" if r.loo_per_seed is None else f"{r.loo_per_seed[k]:.12g}"
                lines.append(
                    f"{r.label()},{r.weight_count},{seed},"
                    f"{r.q_per_seed[k]:.12g},{r.aic_per_seed[k]:.12g},{loo}"
                )
        return "\n".join(lines) + "\n"


def compare_architectures(
    archs,
    data: Dataset,
    seeds: int = 2,
    config: TrainConfig = TrainConfig(),
    include_loo: bool = True,
) -> SelectionReport:
    """Train every architecture from multiple seeds and tabulate scores.

    Each seed contributes its own full-data final cost and AIC; the mean
    over seeds is reported alongside, labelled.  No winner is chosen.
    Architectures with more weights than a cohort-sized dataset can
    constrain draw a warning.
    """
    archs = list(archs)
    if not archs:
        raise ConfigError("need at least one architecture")
    seed_list = tuple(config.seed + k for k in range(seeds))
    rows = []
    for arch in archs:
        w = arch.weight_count
        if w > UNTENABLE_WEIGHTS:
            warnings.warn(
                f"architecture {arch.hidden_layers} has {w} weights; "
                f"more than {UNTENABLE_WEIGHTS} is hard to constrain with "
                f"a cohort of {len(data)} rows",
                stacklevel=2,
            )
        qs, aics, loos = [], [], []
        for seed in seed_list:
            cfg = TrainConfig(
                rprop=config.rprop,
                rprop_evals=config.rprop_evals,
                cg_evals=config.cg_evals,
                seed=seed,
            )
            result = train(None, data, cfg, arch=arch)
            qs.append(result.q_final)
            aics.append(aic(result.q_final, w))
            if include_loo:
                loos.append(loo_cv(arch, data, cfg).score)
        q_bar = float(np.mean(qs))
        rows.append(
            ArchReport(
                arch=arch,
                weight_count=w,
                q_per_seed=tuple(qs),
                aic_per_seed=tuple(aics),
                q_bar=q_bar,
                aic_of_mean=aic(q_bar, w),
                loo_per_seed=tuple(loos) if include_loo else None,
            )
        )
    return SelectionReport(rows=tuple(rows), seeds=seed_list)
