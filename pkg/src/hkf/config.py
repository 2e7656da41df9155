"""Experiment configuration: dataclasses mirrored one-to-one by the JSON
config files; unknown keys are rejected at load time."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

EXPERIMENTS = (
    "regularity", "l2-bias", "amplitude", "lengthscale", "joint",
    "varcoef", "discontinuity", "deterministic", "oracle-check",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TruthSpec:
    """What generates the observed data."""

    kind: str = "matern"       # matern | varcoef | composite | green | file
    sigma: float = 1.0
    tau: float = 0.0
    s: float = 2.5
    source: float = 0.5        # point-source location for the green truth
    path: str = None           # one-column CSV for kind="file"


@dataclass(frozen=True)
class KernelSpec:
    """The model family the losses are built from."""

    kind: str = "torus-power"  # torus-power | torus-matern | operator | laplacian | composite
    s_model: float = 1.0       # composite family exponent
    t_fixed: float = None      # fixed regularity for lengthscale scans


@dataclass(frozen=True)
class EstimatorSettings:
    coarse_n: int = 200
    tol: float = 1e-4
    delta: float = 0.1         # regularity interval [d/2+delta, 1/delta]
    bounds: dict = None        # per-parameter overrides, e.g. {"t": [0.6, 4.0]}

    def bounds_for(self, name: str, default) -> tuple[float, float]:
        if self.bounds and name in self.bounds:
            lo, hi = self.bounds[name]
            return float(lo), float(hi)
        return default


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int = 1
    q: int = 9
    q_min: int = 4                      # first level of multi-level sweeps
    instances: int = 50
    seed: int = 0
    truth: TruthSpec = field(default_factory=TruthSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    out: str = None
    jitter: float = 0.0
    truncation_extra: int = 4
    grid_level: int = 10                # interval grids use 2^grid_level - 1 interior points
    t_values: tuple = (0.5, 1.0, 2.0, 3.0)
    sweep_bounds: tuple = (0.6, 4.0)
    sweep_n: int = 120
    joint: str = "s-sigma"              # joint runs: s-sigma | s-tau
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.instances < 1:
            raise ConfigError("instance count must be at least 1")
        if not (2 <= self.q <= 12):
            raise ConfigError("q must lie in [2, 12]")
        if not (2 <= self.q_min <= self.q):
            raise ConfigError("q_min must lie in [2, q]")
        if self.truth.kind == "file":
            if not self.truth.path or not os.path.exists(self.truth.path):
                raise ConfigError(f"truth file not found: {self.truth.path!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


_NESTED = {"truth": TruthSpec, "kernel": KernelSpec, "estimator": EstimatorSettings}


def _strict_build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(key)
        if sub is not None and isinstance(value, dict):
            value = _strict_build(sub, value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _strict_build(ExperimentConfig, dict(data))


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Per-experiment defaults matching the reference settings."""
    base: dict = {"experiment": experiment}
    if experiment == "regularity":
        base.update(truth=TruthSpec(kind="matern", s=2.5))
    elif experiment == "l2-bias":
        base.update(truth=TruthSpec(kind="matern", s=2.5), instances=20)
    elif experiment == "amplitude":
        base.update(truth=TruthSpec(kind="matern", s=2.5, sigma=1.0))
    elif experiment == "lengthscale":
        base.update(truth=TruthSpec(kind="matern", s=2.5, tau=1.0),
                    kernel=KernelSpec(kind="torus-matern"))
    elif experiment == "joint":
        base.update(truth=TruthSpec(kind="matern", s=2.5))
    elif experiment == "varcoef":
        base.update(truth=TruthSpec(kind="varcoef", s=2.5),
                    kernel=KernelSpec(kind="operator"))
    elif experiment == "discontinuity":
        base.update(truth=TruthSpec(kind="composite"),
                    kernel=KernelSpec(kind="composite", s_model=1.0))
    elif experiment == "deterministic":
        base.update(truth=TruthSpec(kind="green", s=1.2),
                    kernel=KernelSpec(kind="laplacian"), instances=1)
    elif experiment == "oracle-check":
        base.update(instances=10, q=6, q_min=3)
    cfg = dict(base)
    cfg.update(overrides)
    for key, sub in _NESTED.items():
        if isinstance(cfg.get(key), dict):
            cfg[key] = _strict_build(sub, cfg[key])
    return ExperimentConfig(**cfg)
