"""Trainable backbones behind a single forward interface.

Two backbones (a small MLP and a 4-block CNN) run in three modes: ``baseline``
has plain normalization and ignores conditioning inputs; ``cnt`` and
``only-noise`` replace every normalization with a conditional one driven by
the (y_noisy, t) embedding. The only-noise mode differs from cnt solely in the
noise schedule it is trained with, not in architecture.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, dropout
from .conditioning import ConditionalNorm, ConditioningEmbedder, PlainNorm
from .errors import ConfigError, ShapeError, UsageError, ValidationError
from .fileio import atomic_write_bytes, atomic_write_text
from .layers import Conv2d, Linear, avg_pool2
from .noise import NoiseSchedule, corrupt

BACKBONES = ("mlp", "smallcnn")
ACTIVATIONS = ("relu", "mish")
MODEL_MODES = ("baseline", "only-noise", "cnt")

CHECKPOINT_FORMAT = "cntlab-checkpoint-v1"


@dataclass
class ModelConfig:
    backbone: str = "mlp"
    channels: int = 8
    num_blocks: int = 4
    # smooth default: relu trunks can latch a constant-output state at high lr
    activation: str = "mish"
    heads: list[int] = field(default_factory=lambda: [2])
    mode: str = "cnt"
    dropout_p: float = 0.1
    norm_kind: str = "group"
    num_groups: int = 2
    embed_width: int = 128
    num_frequencies: int = 16

    def validate(self) -> None:
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}, expected one of {BACKBONES}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}"
            )
        if self.mode not in MODEL_MODES:
            raise ConfigError(f"unknown model mode {self.mode!r}, expected one of {MODEL_MODES}")
        if not self.heads:
            raise ConfigError("heads must be non-empty")
        if any(int(h) < 2 for h in self.heads):
            raise ConfigError(f"every head needs >= 2 classes, got {self.heads}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def target_width(self) -> int:
        return int(sum(self.heads))


def _schedule_for_mode(mode: str, schedule: NoiseSchedule | None) -> NoiseSchedule | None:
    if mode == "baseline":
        return schedule
    if schedule is None:
        return NoiseSchedule(mode="only-noise" if mode == "only-noise" else "cnt")
    if schedule.mode != mode:
        raise ConfigError(
            f"model mode {mode!r} does not match noise schedule mode {schedule.mode!r}"
        )
    return schedule


class Model:
    """A backbone plus heads, optionally conditioned on (y_noisy, t)."""

    def __init__(self, config: ModelConfig, input_shape, schedule: NoiseSchedule | None = None,
                 seed: int = 0):
        config.validate()
        self.config = config
        self.seed = int(seed)
        self.conditioned = config.mode != "baseline"
        self.schedule = _schedule_for_mode(config.mode, schedule)

        if config.backbone == "mlp":
            if not isinstance(input_shape, (int, np.integer)):
                raise ConfigError(f"mlp backbone needs an int feature count, got {input_shape!r}")
            self.input_shape = int(input_shape)
        else:
            if isinstance(input_shape, (int, np.integer)) or len(tuple(input_shape)) != 3:
                raise ConfigError(f"smallcnn backbone needs a (C, H, W) shape, got {input_shape!r}")
            self.input_shape = tuple(int(v) for v in input_shape)

        self.embedder = None
        if self.conditioned:
            self.embedder = ConditioningEmbedder(
                config.target_width, config.embed_width, config.num_frequencies, seed=self.seed
            )

        self._build_blocks()
        feat = self.config.channels
        self.heads = [
            Linear(f"head{i}", feat, int(w), self.seed) for i, w in enumerate(config.heads)
        ]

    def _make_norm(self, name: str, channels: int):
        cfg = self.config
        if self.conditioned:
            return ConditionalNorm(
                name, cfg.norm_kind, channels, cfg.embed_width, cfg.num_groups, seed=self.seed
            )
        return PlainNorm(name, cfg.norm_kind, channels, cfg.num_groups)

    def _build_blocks(self) -> None:
        cfg = self.config
        self.blocks = []
        if cfg.backbone == "mlp":
            in_dim = self.input_shape
            for b in range(cfg.num_blocks):
                lin = Linear(f"backbone.block{b}.fc", in_dim, cfg.channels, self.seed,
                             bias=False)
                norm = self._make_norm(f"backbone.block{b}.norm", cfg.channels)
                self.blocks.append(("fc", lin, norm, False))
                in_dim = cfg.channels
            return
        # smallcnn: downsample by 2 after every block but the last, capped at 3
        c_in, h, w = self.input_shape
        pool_after = set(range(min(3, cfg.num_blocks - 1)))
        for b in range(cfg.num_blocks):
            conv = Conv2d(f"backbone.block{b}.conv", c_in, cfg.channels, self.seed,
                          bias=False)
            norm = self._make_norm(f"backbone.block{b}.norm", cfg.channels)
            pooled = b in pool_after
            if pooled:
                if h % 2 or w % 2 or h < 2 or w < 2:
                    raise ConfigError(
                        f"input {self.input_shape} cannot be downsampled at block {b} "
                        f"(spatial {h}x{w})"
                    )
                h, w = h // 2, w // 2
            self.blocks.append(("conv", conv, norm, pooled))
            c_in = cfg.channels

    # ------------------------------------------------------------------

    def forward(self, x, y_noisy=None, t=None, training: bool = False,
                rng: np.random.Generator | None = None) -> list[Tensor]:
        """Logits per head. Conditioned modes require y_noisy (N, target_width)
        and t (N,); baseline ignores both."""
        x = as_tensor(x)
        cfg = self.config
        if cfg.backbone == "mlp":
            if x.ndim != 2 or x.shape[1] != self.input_shape:
                raise ShapeError(f"expected input (N, {self.input_shape}), got {x.shape}")
        else:
            if x.ndim != 4 or x.shape[1:] != self.input_shape:
                raise ShapeError(f"expected input (N,) + {self.input_shape}, got {x.shape}")
        if training and cfg.dropout_p > 0 and rng is None:
            raise UsageError("training forward with dropout needs an rng")

        emb = None
        if self.conditioned:
            if y_noisy is None or t is None:
                missing = [n for n, v in (("y_noisy", y_noisy), ("t", t)) if v is None]
                raise UsageError(
                    f"{cfg.mode} mode requires conditioning inputs, missing: {', '.join(missing)}"
                )
            emb = self.embedder(y_noisy, t)

        h = x
        for kind, layer, norm, pooled in self.blocks:
            h = layer(h)
            h = norm(h, emb, training) if self.conditioned else norm(h, training)
            h = h.mish() if cfg.activation == "mish" else h.relu()
            if cfg.dropout_p > 0:
                h = dropout(h, cfg.dropout_p, rng, training)
            if pooled:
                h = avg_pool2(h)
        if cfg.backbone == "smallcnn":
            h = h.mean(axis=(2, 3))
        return [head(h) for head in self.heads]

    def predict(self, x, rng: np.random.Generator | None = None) -> list[np.ndarray]:
        """Eval-mode logits with one pure-noise conditioning draw per example.

        Baseline models are fully deterministic and consume no randomness.
        """
        x = as_tensor(x)
        if not self.conditioned:
            return [lg.data for lg in self.forward(x)]
        if rng is None:
            raise UsageError("predict in a conditioned mode needs an rng for the noise draw")
        n = x.shape[0]
        width = self.config.target_width
        t = np.ones(n)
        noisy = corrupt(np.zeros((n, width)), t, self.schedule, rng)
        logits = self.forward(x, y_noisy=noisy.y_noisy, t=t)
        return [lg.data for lg in logits]

    # ------------------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        if self.embedder is not None:
            out.extend(self.embedder.parameters())
        for _, layer, norm, _ in self.blocks:
            out.extend(layer.parameters())
            out.extend(norm.parameters())
        for head in self.heads:
            out.extend(head.parameters())
        return out

    def parameter_counts(self) -> dict[str, int]:
        """Total size plus the split into backbone vs conditioning parameters."""
        cond_names = set()
        if self.embedder is not None:
            cond_names.update(p.name for p in self.embedder.parameters())
            for _, _, norm, _ in self.blocks:
                cond_names.update(p.name for p in norm.parameters())
        total = backbone = conditioning = 0
        for p in self.parameters():
            n = p.data.size
            total += n
            if p.name in cond_names:
                conditioning += n
            else:
                backbone += n
        return {"total": total, "backbone": backbone, "conditioning": conditioning}

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [(p.name, p.data) for p in self.parameters()]
        for _, _, norm, _ in self.blocks:
            for key, arr in norm.state_arrays():
                out.append((f"{norm.name}.{key}", arr))
        return out

    def load_state(self, mapping: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_arrays():
            if name not in mapping:
                raise ValidationError(f"checkpoint is missing array {name!r}")
            src = np.asarray(mapping[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValidationError(
                    f"checkpoint array {name!r} has shape {src.shape}, expected {arr.shape}"
                )
            arr[...] = src


# ----------------------------------------------------------------------
# checkpoints: <stem>.json manifest + <stem>.bin of raw little-endian doubles


def save_checkpoint(model: Model, stem) -> tuple[str, str]:
    stem = str(stem)
    records = []
    chunks = []
    offset = 0
    for name, arr in model.state_arrays():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        records.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "dtype": "<f8",
        "seed": model.seed,
        "model_config": asdict(model.config),
        "input_shape": model.input_shape if isinstance(model.input_shape, int)
        else list(model.input_shape),
        "noise": None if model.schedule is None else {
            "beta_min": model.schedule.beta_min,
            "beta_max": model.schedule.beta_max,
            "family": model.schedule.family,
            "mode": model.schedule.mode,
        },
        "records": records,
    }
    json_path, bin_path = stem + ".json", stem + ".bin"
    atomic_write_bytes(bin_path, b"".join(chunks))
    atomic_write_text(json_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return json_path, bin_path


def load_checkpoint(json_path) -> Model:
    json_path = str(json_path)
    with open(json_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"unrecognized checkpoint format {manifest.get('format')!r}")
    cfg = ModelConfig(**manifest["model_config"])
    input_shape = manifest["input_shape"]
    if isinstance(input_shape, list):
        input_shape = tuple(input_shape)
    schedule = None
    if manifest["noise"] is not None:
        schedule = NoiseSchedule(**manifest["noise"])
    model = Model(cfg, input_shape, schedule=schedule, seed=manifest.get("seed", 0))

    bin_path = json_path[: -len(".json")] + ".bin"
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    mapping = {}
    for rec in manifest["records"]:
        start, count = rec["offset"], rec["count"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        mapping[rec["name"]] = arr.reshape(rec["shape"])
    model.load_state(mapping)
    return model
