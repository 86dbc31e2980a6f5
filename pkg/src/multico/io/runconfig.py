"""Run configuration: one flat YAML mapping with a fixed key set.

Unknown keys are rejected so typos fail fast; every run logs the resolved
configuration next to its artifacts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import yaml

from .datasets import DataError


@dataclass
class RunConfig:
    preset: str = "desk"            # "desk" | "paper"
    precision: str = "float32"      # "float32" | "float64"
    tasks: list = field(default_factory=list)
    data_dir: str = "data"
    out_dir: str = "runs/default"
    seed: int = 0
    epochs: int = 10
    steps_per_epoch: int = 100
    batch_size: int = 64
    lr: float = 0.0005
    lr_decay: float = 0.97
    decay_every: int = 10
    weight_decay: float = 0.0
    val_instances: int = 64
    freeze_backbone: bool = False
    bypass_codebook: bool = False


_TYPES = {
    "preset": str, "precision": str, "tasks": list, "data_dir": str,
    "out_dir": str, "seed": int, "epochs": int, "steps_per_epoch": int,
    "batch_size": int, "lr": float, "lr_decay": float, "decay_every": int,
    "weight_decay": float, "val_instances": int, "freeze_backbone": bool,
    "bypass_codebook": bool,
}


def parse_runconfig(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise DataError(f"{path}: not valid YAML: {e}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise DataError(f"{path}: expected a flat key-value mapping")
    unknown = sorted(set(raw) - set(_TYPES))
    if unknown:
        raise DataError(f"{path}: unknown config keys {unknown}; "
                        f"allowed: {sorted(_TYPES)}")
    cfg = RunConfig()
    for key, value in raw.items():
        want = _TYPES[key]
        if want is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, want):
            raise DataError(f"{path}: key {key!r} must be {want.__name__}, "
                            f"got {type(value).__name__}")
        setattr(cfg, key, value)
    if cfg.preset not in ("desk", "paper"):
        raise DataError(f"{path}: preset must be 'desk' or 'paper'")
    if cfg.precision not in ("float32", "float64"):
        raise DataError(f"{path}: precision must be 'float32' or 'float64'")
    if not cfg.tasks:
        raise DataError(f"{path}: 'tasks' must list at least one task id")
    return cfg


def resolved(cfg: RunConfig) -> dict:
    return asdict(cfg)
