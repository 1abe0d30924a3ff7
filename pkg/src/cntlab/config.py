"""Experiment configuration.

External format is flat ``key = value`` text, one pair per line, ``#``
comments. Dotted keys group related options (noise.*, model.*, cond.*, opt.*).
CLI flags override file values which override defaults. Unknown keys and type
mismatches are rejected with the offending key named; validation collects
every violation before reporting.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .models import ACTIVATIONS, BACKBONES, MODEL_MODES, ModelConfig
from .noise import FAMILIES, NoiseSchedule
from .conditioning import NORM_KINDS

TASKS = ("blobs", "shapes")

OUTPUT_ROOT_ENV = "CNTLAB_OUTPUT_ROOT"


@dataclass
class ExperimentConfig:
    task: str = "blobs"
    mode: str = "cnt"
    epochs: int = 0  # auto: 300 for blobs, 60 for shapes
    batch_size: int = 128
    seed: int = 0
    output_dir: str = ""  # auto: runs/<task>_<mode>_seed<seed>
    # noise.*
    noise_family: str = "gaussian"
    beta_min: float = 0.2
    beta_max: float = 20.0
    # model.*
    backbone: str = ""  # auto: mlp for blobs, smallcnn for shapes
    channels: int = 8
    num_blocks: int = 0  # auto: 2 for mlp, 4 for smallcnn
    activation: str = "mish"
    dropout_p: float = 0.1
    num_groups: int = 2
    # cond.*
    embed_width: int = 128
    num_frequencies: int = 16
    norm_kind: str = "group"
    # opt.*
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    # mixup.*  (auto: 1.0 for blobs, 0.0 for shapes; 0 disables)
    mixup_alpha: float = -1.0
    # blobs.*
    blobs_classes: int = 4
    blobs_dim: int = 2
    blobs_sigma: float = 0.6
    blobs_train_size: int = 4096
    blobs_test_size: int = 1024
    # shapes.*
    shapes_train_size: int = 2048
    shapes_test_size: int = 512

    # ------------------------------------------------------------------

    def resolve(self) -> "ExperimentConfig":
        """Fill task-dependent defaults in place and return self."""
        if self.epochs <= 0:
            self.epochs = 300 if self.task == "blobs" else 60
        if not self.backbone:
            self.backbone = "mlp" if self.task == "blobs" else "smallcnn"
        if self.num_blocks <= 0:
            self.num_blocks = 2 if self.backbone == "mlp" else 4
        if self.mixup_alpha < 0:
            self.mixup_alpha = 1.0 if self.task == "blobs" else 0.0
        if not self.output_dir:
            self.output_dir = f"runs/{self.task}_{self.mode}_seed{self.seed}"
        return self

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.task not in TASKS:
            problems.append(f"task: {self.task!r} not in {TASKS}")
        if self.mode not in MODEL_MODES:
            problems.append(f"mode: {self.mode!r} not in {MODEL_MODES}")
        if self.epochs < 1:
            problems.append(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            problems.append(f"seed: must be >= 0, got {self.seed}")
        if self.noise_family not in FAMILIES:
            problems.append(f"noise.family: {self.noise_family!r} not in {FAMILIES}")
        if self.beta_min < 0:
            problems.append(f"noise.beta_min: must be >= 0, got {self.beta_min}")
        if self.beta_max < self.beta_min:
            problems.append(
                f"noise.beta_max: must be >= beta_min, got {self.beta_max} < {self.beta_min}"
            )
        if self.backbone and self.backbone not in BACKBONES:
            problems.append(f"model.backbone: {self.backbone!r} not in {BACKBONES}")
        if self.channels < 1:
            problems.append(f"model.channels: must be >= 1, got {self.channels}")
        if self.activation not in ACTIVATIONS:
            problems.append(f"model.activation: {self.activation!r} not in {ACTIVATIONS}")
        if not 0.0 <= self.dropout_p < 1.0:
            problems.append(f"model.dropout_p: must be in [0, 1), got {self.dropout_p}")
        if self.norm_kind not in NORM_KINDS:
            problems.append(f"cond.norm_kind: {self.norm_kind!r} not in {NORM_KINDS}")
        if self.norm_kind == "group" and (
            self.num_groups < 1 or self.channels % max(self.num_groups, 1)
        ):
            problems.append(
                f"model.num_groups: {self.num_groups} must divide channels {self.channels}"
            )
        if self.embed_width < 2 or self.embed_width % 2:
            problems.append(f"cond.embed_width: must be even and >= 2, got {self.embed_width}")
        if self.num_frequencies < 1:
            problems.append(f"cond.num_frequencies: must be >= 1, got {self.num_frequencies}")
        if self.lr <= 0:
            problems.append(f"opt.lr: must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            problems.append(f"opt.momentum: must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            problems.append(f"opt.weight_decay: must be >= 0, got {self.weight_decay}")
        for key, value in (
            ("blobs.classes", self.blobs_classes),
            ("blobs.dim", self.blobs_dim),
        ):
            if value < 2:
                problems.append(f"{key}: must be >= 2, got {value}")
        if self.blobs_sigma < 0:
            problems.append(f"blobs.sigma: must be >= 0, got {self.blobs_sigma}")
        for key, value in (
            ("blobs.train_size", self.blobs_train_size),
            ("blobs.test_size", self.blobs_test_size),
            ("shapes.train_size", self.shapes_train_size),
            ("shapes.test_size", self.shapes_test_size),
        ):
            if value < 1:
                problems.append(f"{key}: must be >= 1, got {value}")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
        return self

    # ------------------------------------------------------------------

    def noise_schedule(self) -> NoiseSchedule | None:
        if self.mode == "baseline":
            return None
        return NoiseSchedule(
            beta_min=self.beta_min,
            beta_max=self.beta_max,
            family=self.noise_family,
            mode="only-noise" if self.mode == "only-noise" else "cnt",
        )

    def model_config(self, heads: list[int]) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone,
            channels=self.channels,
            num_blocks=self.num_blocks,
            activation=self.activation,
            heads=list(heads),
            mode=self.mode,
            dropout_p=self.dropout_p,
            norm_kind=self.norm_kind,
            num_groups=self.num_groups,
            embed_width=self.embed_width,
            num_frequencies=self.num_frequencies,
        )


# mapping from external dotted keys to dataclass attributes
KEYMAP: dict[str, str] = {
    "task": "task",
    "mode": "mode",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "seed": "seed",
    "output_dir": "output_dir",
    "noise.family": "noise_family",
    "noise.beta_min": "beta_min",
    "noise.beta_max": "beta_max",
    "model.backbone": "backbone",
    "model.channels": "channels",
    "model.num_blocks": "num_blocks",
    "model.activation": "activation",
    "model.dropout_p": "dropout_p",
    "model.num_groups": "num_groups",
    "cond.embed_width": "embed_width",
    "cond.num_frequencies": "num_frequencies",
    "cond.norm_kind": "norm_kind",
    "opt.lr": "lr",
    "opt.momentum": "momentum",
    "opt.weight_decay": "weight_decay",
    "mixup.alpha": "mixup_alpha",
    "blobs.classes": "blobs_classes",
    "blobs.dim": "blobs_dim",
    "blobs.sigma": "blobs_sigma",
    "blobs.train_size": "blobs_train_size",
    "blobs.test_size": "blobs_test_size",
    "shapes.train_size": "shapes_train_size",
    "shapes.test_size": "shapes_test_size",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, attr: str, raw: str):
    kind = _FIELD_TYPES[attr]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None


def parse_kv_file(path) -> dict[str, str]:
    """Read flat key = value lines; # starts a comment."""
    pairs: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = body.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(file_values: dict[str, str] | None = None,
                 overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults <- config file <- CLI overrides, then resolve and validate."""
    config = ExperimentConfig()
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            attr = KEYMAP.get(key)
            if attr is None:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(config, attr, _convert(key, attr, str(raw)))
    return config.resolve().validate()


def config_echo(config: ExperimentConfig) -> dict[str, str]:
    """External-keyed snapshot of the effective configuration."""
    return {key: str(getattr(config, attr)) for key, attr in KEYMAP.items()}


def resolve_output_dir(path_str: str) -> Path:
    """Relative output dirs live under the env-var root when it is set."""
    path = Path(path_str)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path
