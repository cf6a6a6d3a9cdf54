"""Synthetic cohort generation and dimensionality reduction.

Twelve regional fluid volumes per subject collapse to five inputs in
three steps: pool anatomically adjacent regions and normalise by the
bounding-box volume (size invariance), rescale by a fitted linear age
trend so every subject is expressed relative to the atrophy expected at
their age, and combine square roots of the pooled values into contrast
variables (square roots stabilise the variance of count-like volumes).

Region indices follow a fixed 3 x 2 x 2 convention: ``i // 4`` selects
front / middle / back, bit ``(i % 4) // 2`` selects port (left) /
starboard (right), bit ``i % 2`` selects upper / lower.  Any consistent
assignment preserves the pipeline's properties; this one is written into
output headers.

The generator replaces an unavailable clinical cohort: four diagnostic
classes with distinct regional atrophy profiles, repeat measurements
with count-like noise, everything seeded and labelled synthetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import AgeCorrectionError, ConfigError, DatasetError
from .network import Dataset

__all__ = [
    "REGION_GROUPS",
    "CLASS_NAMES",
    "RawSubject",
    "AgeModel",
    "PooledVolumes",
    "ReducedPattern",
    "pool_regions",
    "age_correct",
    "reduce_pools",
    "fit_age_slope",
    "SynthConfig",
    "GeneratedCohort",
    "synth_generate",
    "write_raw_csv",
    "write_reduced_csv",
    "read_reduced_csv",
]

CLASS_NAMES = ("normal", "alz", "ftd", "vasd")

# fixed 12-region index subsets (see module docstring)
REGION_GROUPS = {
    "front": (0, 1, 2, 3),
    "middle": (4, 5, 6, 7),
    "back": (8, 9, 10, 11),
    "port": (0, 1, 4, 5, 8, 9),
    "starboard": (2, 3, 6, 7, 10, 11),
    "upper": (0, 2, 4, 6, 8, 10),
    "lower": (1, 3, 5, 7, 9, 11),
}

AGE_RANGE = (30.0, 100.0)


@dataclass(frozen=True)
class RawSubject:
    """One measurement session: twelve regional volumes plus context."""

    subject_id: int
    repeat: int
    label: str
    age: float
    bbox_volume: float
    volumes: np.ndarray

    def __post_init__(self):
        vols = np.asarray(self.volumes, dtype=float)
        object.__setattr__(self, "volumes", vols)
        if vols.shape != (12,):
            raise DatasetError(f"need 12 regional volumes, got {vols.shape}")
        if np.any(vols < 0):
            raise DatasetError("regional volumes must be >= 0")
        if self.bbox_volume <= 0:
            raise DatasetError("bounding-box volume must be positive")
        if self.bbox_volume <= vols.max():
            raise DatasetError(
                "bounding box must exceed every regional volume"
            )
        if not AGE_RANGE[0] <= self.age <= AGE_RANGE[1]:
            raise DatasetError(f"age {self.age} outside {AGE_RANGE}")
        if self.label not in CLASS_NAMES:
            raise DatasetError(f"unknown class {self.label!r}")


@dataclass(frozen=True)
class AgeModel:
    """Linear atrophy trend ``V = (age - C) / K`` for normalised pools."""

    slope_years: float = 40.0  # K: years per unit of pooled atrophy
    onset_age: float = 40.0  # C

    def __post_init__(self):
        if self.slope_years <= 0:
            raise ConfigError("slope constant must be positive")


@dataclass(frozen=True)
class PooledVolumes:
    front: float
    middle: float
    back: float
    port: float
    starboard: float
    upper: float
    lower: float

    def as_dict(self) -> dict:
        return {
            "front": self.front, "middle": self.middle, "back": self.back,
            "port": self.port, "starboard": self.starboard,
            "upper": self.upper, "lower": self.lower,
        }


@dataclass(frozen=True)
class ReducedPattern:
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise DatasetError("non-finite reduced pattern")
        if self.x3 < 0:
            raise DatasetError("total-atrophy coordinate must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x4, self.x5])


def pool_regions(raw: RawSubject) -> PooledVolumes:
    """Pool the fixed region subsets and normalise by the bounding box.

    Invariant under rescaling all volumes and the box together: the
    pooled values only see proportions.
    """
    v = raw.volumes / raw.bbox_volume
    return PooledVolumes(
        **{name: float(np.sum(v[list(idx)]))
           for name, idx in REGION_GROUPS.items()}
    )


def age_correct(pools: PooledVolumes, age: float, model: AgeModel) -> PooledVolumes:
    """Rescale each pool to the atrophy expected at the onset-age
    reference: ``V' = V K / (age - C)``.  At ``age = C + K`` the
    correction is the identity."""
    if age <= model.onset_age:
        raise AgeCorrectionError(
            f"age {age} is at or below the onset age {model.onset_age}; "
            "subject excluded"
        )
    factor = model.slope_years / (age - model.onset_age)
    d = pools.as_dict()
    return PooledVolumes(**{k: v * factor for k, v in d.items()})


def reduce_pools(primed: PooledVolumes) -> ReducedPattern:
    """Square-root contrast variables over the corrected pools."""
    d = primed.as_dict()
    if any(v < 0 for v in d.values()):
        raise DatasetError("corrected pools must be >= 0")
    rf, rm, rb = math.sqrt(d["front"]), math.sqrt(d["middle"]), math.sqrt(d["back"])
    rp, rs = math.sqrt(d["port"]), math.sqrt(d["starboard"])
    ru, rl = math.sqrt(d["upper"]), math.sqrt(d["lower"])
    s2, s3 = math.sqrt(2.0), math.sqrt(3.0)
    return ReducedPattern(
        x1=(rm - rf) / s2,
        x2=(rm - rb) / s2,
        x3=(rf + rm + rb) / s3,
        x4=(rp - rs) / s2,
        x5=(ru - rl) / s2,
    )


def fit_age_slope(subjects, onset_age: float = 40.0) -> AgeModel:
    """Fit the trend constant from normal subjects by least squares
    through the origin of ``age - C`` against total normalised volume."""
    ages, totals = [], []
    for raw in subjects:
        if raw.label != "normal":
            continue
        v = float(np.sum(raw.volumes)) / raw.bbox_volume
        if raw.age > onset_age:
            ages.append(raw.age - onset_age)
            totals.append(v)
    if not totals:
        raise ConfigError("no usable normal subjects to fit the age trend")
    totals = np.asarray(totals)
    ages = np.asarray(ages)
    k = float(totals @ ages) / float(totals @ totals)
    return AgeModel(slope_years=k, onset_age=onset_age)


# ---------------------------------------------------------------------------
# Synthetic cohort
# ---------------------------------------------------------------------------


def _default_class_profiles() -> dict:
    """Regional atrophy multipliers per class over the 12 regions.

    Deliberately simple anatomy: one diffuse class, one front-dominant
    class, one laterally asymmetric class.  Synthetic presets, not
    clinical fact.
    """
    front = np.array([i // 4 == 0 for i in range(12)], dtype=float)
    middle = np.array([i // 4 == 1 for i in range(12)], dtype=float)
    port = np.array([(i % 4) // 2 == 0 for i in range(12)], dtype=float)
    lower = np.array([i % 2 == 1 for i in range(12)], dtype=float)
    ones = np.ones(12)
    return {
        "normal": ones,
        "alz": 1.55 * ones + 0.15 * middle,
        "ftd": ones + 1.6 * front + 0.3 * middle,
        "vasd": ones + 0.8 * port + 0.4 * lower,
    }


@dataclass(frozen=True)
class SynthConfig:
    """Cohort layout and noise levels for the generator."""

    counts: dict = field(
        default_factory=lambda: {"normal": 9, "alz": 18, "ftd": 19, "vasd": 11}
    )
    repeats: int = 2
    age_means: dict = field(
        default_factory=lambda: {
            "normal": 64.2, "alz": 61.3, "ftd": 60.6, "vasd": 67.6,
        }
    )
    age_sds: dict = field(
        default_factory=lambda: {
            "normal": 7.7, "alz": 6.4, "ftd": 0.2, "vasd": 5.9,
        }
    )
    base_rate: float = 0.0005  # normalised volume per region per year
    class_profiles: dict = field(default_factory=_default_class_profiles)
    biological_sd: float = 0.35  # lognormal subject-level variation
    repeat_noise: float = 0.03  # count-like measurement noise scale
    bbox_base: float = 1200.0
    bbox_sd: float = 0.08
    onset_age: float = 40.0
    # fraction of subjects with a borderline presentation: the
    # class-specific signature is partially expressed (diseased shrink
    # toward normal anatomy, normals drift toward a random disease),
    # which keeps the classes genuinely overlapping
    ambiguity: float = 0.2

    def __post_init__(self):
        for cls in CLASS_NAMES:
            if self.counts.get(cls, 0) < 0:
                raise ConfigError(f"negative count for class {cls}")
        if sum(self.counts.get(c, 0) for c in CLASS_NAMES) < 2:
            raise ConfigError("cohort needs at least two subjects")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def expected_pattern(self, label: str, age: float) -> ReducedPattern:
        """Noise-free reduction of the configured class profile; the
        analytic oracle for generator self-checks."""
        per_region = self.base_rate * self.class_profiles[label] * (
            age - self.onset_age
        )
        normal_total_slope = self.base_rate * float(
            np.sum(self.class_profiles["normal"])
        )
        model = AgeModel(1.0 / normal_total_slope, self.onset_age)
        pools = PooledVolumes(
            **{
                name: float(np.sum(per_region[list(idx)]))
                for name, idx in REGION_GROUPS.items()
            }
        )
        return reduce_pools(age_correct(pools, age, model))


@dataclass(frozen=True)
class GeneratedCohort:
    subjects: tuple[RawSubject, ...]
    patterns: tuple[ReducedPattern, ...]
    age_model: AgeModel
    dataset: Dataset
    config: SynthConfig

    def class_of_row(self, i: int) -> str:
        return self.subjects[i].label


def _targets_for(label: str) -> np.ndarray:
    return np.array(
        [1.0 if label == c else 0.0 for c in CLASS_NAMES]
    )


def synth_generate(config: SynthConfig = SynthConfig(), seed: int = 0) -> GeneratedCohort:
    """Generate the synthetic cohort and run the full reduction.

    Every subject appears ``repeats`` times with fresh count-like
    measurement noise; the age trend is fitted on the generated normals
    and then applied to everyone, mirroring how a stable correction is
    derived from controls only.
    """
    rng = np.random.default_rng(seed)
    subjects: list[RawSubject] = []
    sid = 0
    for label in CLASS_NAMES:
        for _ in range(config.counts.get(label, 0)):
            age = float(
                rng.normal(config.age_means[label], config.age_sds[label])
            )
            lo = max(AGE_RANGE[0], config.onset_age + 5.0)
            age = float(np.clip(age, lo, AGE_RANGE[1]))
            bbox = config.bbox_base * math.exp(
                rng.normal(0.0, config.bbox_sd)
            )
            bio = np.exp(rng.normal(0.0, config.biological_sd, size=12))
            profile = np.asarray(config.class_profiles[label], dtype=float)
            borderline = rng.uniform() < config.ambiguity
            if borderline:
                normal_profile = np.asarray(
                    config.class_profiles["normal"], dtype=float
                )
                if label == "normal":
                    other = CLASS_NAMES[1 + rng.integers(3)]
                    toward = np.asarray(
                        config.class_profiles[other], dtype=float
                    )
                else:
                    toward = normal_profile
                expression = rng.uniform(0.15, 0.45)
                profile = profile + expression * (toward - profile)
            frac = (
                config.base_rate
                * profile
                * (age - config.onset_age)
                * bio
            )
            true_vols = frac * bbox
            for rep in range(config.repeats):
                noise = rng.standard_normal(12)
                measured = true_vols + config.repeat_noise * np.sqrt(
                    np.maximum(true_vols, 0.0)
                ) * noise
                measured = np.maximum(measured, 0.0)
                subjects.append(
                    RawSubject(
                        subject_id=sid,
                        repeat=rep,
                        label=label,
                        age=age,
                        bbox_volume=bbox,
                        volumes=measured,
                    )
                )
            sid += 1

    age_model = fit_age_slope(subjects, config.onset_age)
    patterns = []
    for raw in subjects:
        pools = pool_regions(raw)
        primed = age_correct(pools, raw.age, age_model)
        patterns.append(reduce_pools(primed))

    inputs = np.stack([p.as_array() for p in patterns])
    targets = np.stack([_targets_for(s.label) for s in subjects])
    return GeneratedCohort(
        subjects=tuple(subjects),
        patterns=tuple(patterns),
        age_model=age_model,
        dataset=Dataset(inputs, targets),
        config=config,
    )


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

_RAW_HEADER = "id,repeat,class,age,bbox," + ",".join(
    f"v{i}" for i in range(12)
)
_REDUCED_HEADER = (
    "id,repeat,class,x1,x2,x3,x4,x5,t_norm,t_alz,t_ftd,t_vasd"
)
_GROUPS_COMMENT = "# region groups: " + "; ".join(
    f"{name}={','.join(str(i) for i in idx)}"
    for name, idx in REGION_GROUPS.items()
)


def write_raw_csv(path, cohort: GeneratedCohort) -> None:
    with open(path, "w") as fh:
        fh.write(_GROUPS_COMMENT + "\n")
        fh.write(_RAW_HEADER + "\n")
        for s in cohort.subjects:
            vols = ",".join(f"{v:.10g}" for v in s.volumes)
            fh.write(
                f"{s.subject_id},{s.repeat},{s.label},{s.age:.10g},"
                f"{s.bbox_volume:.10g},{vols}\n"
            )


def write_reduced_csv(path, cohort: GeneratedCohort) -> None:
    with open(path, "w") as fh:
        fh.write(_REDUCED_HEADER + "\n")
        for s, p in zip(cohort.subjects, cohort.patterns):
            xs = ",".join(f"{v:.10g}" for v in p.as_array())
            ts = ",".join(
                str(int(v)) for v in _targets_for(s.label)
            )
            fh.write(f"{s.subject_id},{s.repeat},{s.label},{xs},{ts}\n")


def read_reduced_csv(path) -> Dataset:
    """Load a reduced-pattern table into a training dataset."""
    inputs, targets, ids = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _REDUCED_HEADER:
            raise DatasetError(
                f"unexpected reduced-table header: {header!r}"
            )
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 12:
                raise DatasetError(f"malformed row: {line!r}")
            inputs.append([float(v) for v in parts[3:8]])
            targets.append([float(v) for v in parts[8:12]])
            ids.append((int(parts[0]), int(parts[1]), parts[2]))
    return Dataset(np.array(inputs), np.array(targets), ids=tuple(ids))
