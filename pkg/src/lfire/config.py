"""Experiment configuration and the run manifest."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .nnet.train import TrainConfig
from .priors import PriorSpec
from .simulators import model_spec

# seed-path tags keeping every stage's streams disjoint under one master seed
TAG_TRAIN_BATCH = 10
TAG_OBS_BATCH = 11
TAG_INFER = 12
TAG_EVAL = 13


@dataclass
class ExperimentConfig:
    """One experiment: dataset sizes, network/training settings, inference
    grid and the methods to compare. A single JSON document; CLI flags
    override individual fields."""

    model: str = "arch"
    seed: int = 0
    out_dir: str = "runs/out"
    m: int = 100_000
    task_count: int = 50
    grid_shape: tuple = None            # default (20,)*dim
    n_theta: int = 1000
    n_m: int = 1000
    folds: int = 10
    tol: float = 1e-7
    max_sweeps: int = 10**5
    methods: tuple = ("direnet", "manual")
    threads: int = 1
    prior: PriorSpec = None             # default per model
    sim_options: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)   # NetworkConfig overrides
    train: TrainConfig = field(default_factory=TrainConfig)
    save_ratio_models: bool = False

    def __post_init__(self):
        spec = model_spec(self.model)
        if self.grid_shape is None:
            self.grid_shape = (20,) * spec.dim
        self.grid_shape = tuple(int(g) for g in self.grid_shape)
        if len(self.grid_shape) != spec.dim:
            raise ConfigurationError(
                f"grid shape {self.grid_shape} does not match {self.model} "
                f"dimension {spec.dim}")
        if self.prior is None:
            self.prior = spec.prior
        for name in ("m", "task_count", "n_theta", "n_m", "threads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for method in self.methods:
            if method not in ("direnet", "manual", "constant"):
                raise ConfigurationError(f"unknown summary method {method!r}")
        self.methods = tuple(self.methods)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "m": self.m,
            "task_count": self.task_count,
            "grid_shape": list(self.grid_shape),
            "n_theta": self.n_theta,
            "n_m": self.n_m,
            "folds": self.folds,
            "tol": self.tol,
            "max_sweeps": self.max_sweeps,
            "methods": list(self.methods),
            "threads": self.threads,
            "prior": self.prior.to_json(),
            "sim_options": dict(self.sim_options),
            "network": dict(self.network),
            "train": self.train.to_json(),
            "save_ratio_models": self.save_ratio_models,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "prior" in obj and obj["prior"] is not None:
            obj["prior"] = PriorSpec.from_json(obj["prior"])
        if "train" in obj and obj["train"] is not None:
            obj["train"] = TrainConfig.from_json(obj["train"])
        if "grid_shape" in obj and obj["grid_shape"] is not None:
            obj["grid_shape"] = tuple(obj["grid_shape"])
        if "methods" in obj:
            obj["methods"] = tuple(obj["methods"])
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


class RunManifest:
    """Records produced artifacts with content digests per stage."""

    def __init__(self, path, config: ExperimentConfig = None):
        self.path = Path(path)
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"config_digest": None, "stages": {}, "artifacts": {}}
        if config is not None:
            self.data["config_digest"] = config.digest()

    def record(self, stage: str, files, status: str = "ok"):
        from .io import sha256_file

        self.data["stages"][stage] = {"status": status, "timestamp": time.time()}
        for f in files:
            f = Path(f)
            self.data["artifacts"][f.name] = sha256_file(f)
        self.path.write_text(json.dumps(self.data, sort_keys=True, indent=1) + "\n")

    @property
    def artifact_digests(self) -> dict:
        return dict(self.data["artifacts"])
