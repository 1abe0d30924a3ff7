"""Training engine: SGD with momentum, step LR schedule, noise-bucket metrics,
and the reproducible experiment runner.

The loss is always computed against the clean (possibly mixup-mixed) target
y(0); the corrupted y(t) enters the model only as conditioning input.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, binary_cross_entropy_with_logits, softmax_cross_entropy
from .config import ExperimentConfig, config_echo, resolve_output_dir
from .errors import ConfigError, TrainingDivergedError, UsageError
from .fileio import atomic_write_text
from .models import Model, save_checkpoint
from .noise import NoiseSchedule, corrupt, sample_time
from .rngs import substream
from .tasks import BlobTask, encode_targets, gen_blobs, gen_shapes, mixup

LOSS_KINDS = ("softmax", "bce")


class MomentumSGD:
    """SGD with momentum; weight decay folded into the gradient (classic form):
    v <- momentum*v + (g + wd*theta); theta <- theta - lr*v."""

    def __init__(self, params: list[Parameter], lr: float = 0.1, momentum: float = 0.9,
                 weight_decay: float = 1e-4):
        if lr <= 0:
            raise ConfigError(f"lr must be > 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p, v in zip(self.params, self.velocities):
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.tensor.data -= self.lr * v


@dataclass(frozen=True)
class LRSchedule:
    """Step drops by drop_factor at floor(f * total_epochs) for each f."""

    base_lr: float
    total_epochs: int
    drop_points: tuple[float, ...] = (0.5, 0.8)
    drop_factor: float = 10.0

    def lr_at(self, epoch: int) -> float:
        drops = sum(epoch >= int(np.floor(f * self.total_epochs)) for f in self.drop_points)
        return self.base_lr / self.drop_factor**drops


class NoiseBucketMetrics:
    """Per-epoch accuracy/loss stratified by the decile of the draw of t."""

    def __init__(self, num_buckets: int = 10):
        if num_buckets < 1:
            raise ConfigError(f"num_buckets must be >= 1, got {num_buckets}")
        self.num_buckets = num_buckets
        self.reset()

    def reset(self) -> None:
        self.counts = np.zeros(self.num_buckets)
        self.correct = np.zeros(self.num_buckets)
        self.loss = np.zeros(self.num_buckets)

    def bucket_of(self, t) -> np.ndarray:
        t = np.asarray(t)
        return np.minimum((t * self.num_buckets).astype(int), self.num_buckets - 1)

    def update(self, t, correct, loss_per_example) -> None:
        b = self.bucket_of(t)
        np.add.at(self.counts, b, 1.0)
        np.add.at(self.correct, b, np.asarray(correct, dtype=np.float64))
        np.add.at(self.loss, b, np.asarray(loss_per_example, dtype=np.float64))

    @property
    def examples_seen(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.counts > 0, self.correct / self.counts, np.nan)

    def mean_loss(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.counts > 0, self.loss / self.counts, np.nan)


# ----------------------------------------------------------------------
# losses and accuracy over multi-head outputs


def head_slices(head_widths) -> list[slice]:
    offsets = np.concatenate([[0], np.cumsum(head_widths)]).astype(int)
    return [slice(offsets[i], offsets[i + 1]) for i in range(len(head_widths))]


def compute_loss(logits_list, y_target, head_widths, loss_kind: str):
    """Sum of per-head losses against the one-hot (or mixed) target blocks."""
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {loss_kind!r}, expected one of {LOSS_KINDS}")
    total = None
    for logits, sl in zip(logits_list, head_slices(head_widths)):
        block = y_target[:, sl]
        if loss_kind == "softmax":
            term = softmax_cross_entropy(logits, block)
        else:
            term = binary_cross_entropy_with_logits(logits, block)
        total = term if total is None else total + term
    return total


def _per_example_stats(logits_list, y_target, head_widths, loss_kind: str):
    """Per-example mean-over-heads correctness and loss, from raw arrays."""
    n = y_target.shape[0]
    correct = np.zeros(n)
    loss = np.zeros(n)
    for logits, sl in zip(logits_list, head_slices(head_widths)):
        z = logits.data if hasattr(logits, "data") else np.asarray(logits)
        block = y_target[:, sl]
        correct += np.argmax(z, axis=1) == np.argmax(block, axis=1)
        if loss_kind == "softmax":
            zmax = z.max(axis=1, keepdims=True)
            logp = z - (np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax)
            loss += -(block * logp).sum(axis=1)
        else:
            per = np.maximum(z, 0.0) - z * block + np.log1p(np.exp(-np.abs(z)))
            loss += per.mean(axis=1)
    return correct / len(head_widths), loss


def _divergence_snapshot(model: Model, loss_value: float) -> dict:
    stats = {p.name: float(np.max(np.abs(p.data))) for p in model.parameters()}
    return {"loss": float(loss_value), "param_max_abs": stats}


# ----------------------------------------------------------------------


def train_step(model: Model, batch, schedule: NoiseSchedule | None, opt: MomentumSGD,
               rng: np.random.Generator, mixup_alpha: float = 0.0,
               loss_kind: str = "softmax") -> dict:
    """One SGD step. Returns step metrics including per-example t and
    correctness for bucket tracking (t is None in baseline mode)."""
    x, y0 = batch
    n = len(x)
    if mixup_alpha > 0:
        perm = rng.permutation(n)
        x, y0 = mixup((x, y0), (x[perm], y0[perm]), mixup_alpha, rng)
    head_widths = model.config.heads
    if model.conditioned:
        if schedule is None:
            raise UsageError("conditioned training needs a noise schedule")
        t = sample_time(rng, "train", size=n)
        noisy = corrupt(y0, t, schedule, rng)
        logits = model.forward(x, noisy.y_noisy, t, training=True, rng=rng)
    else:
        t = None
        logits = model.forward(x, training=True, rng=rng)
    loss = compute_loss(logits, y0, head_widths, loss_kind)
    loss_value = float(loss.data)
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(
            f"non-finite loss {loss_value}", _divergence_snapshot(model, loss_value)
        )
    opt.zero_grad()
    loss.backward()
    opt.step()
    correct, per_example_loss = _per_example_stats(logits, y0, head_widths, loss_kind)
    return {
        "loss": loss_value,
        "batch_size": n,
        "t": t,
        "correct": correct,
        "per_example_loss": per_example_loss,
    }


def evaluate(model: Model, x, labels, rng: np.random.Generator | None,
             batch_size: int = 256) -> dict[str, float]:
    """Accuracy per head at t = 1 (single pure-noise draw per example)."""
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels.reshape(-1, 1)
    head_widths = model.config.heads
    hits = np.zeros(len(head_widths))
    n = len(x)
    for start in range(0, n, batch_size):
        xb = x[start : start + batch_size]
        logits = model.predict(xb, rng)
        for i, z in enumerate(logits):
            hits[i] += (np.argmax(z, axis=1) == labels[start : start + batch_size, i]).sum()
    out = {f"head{i}": float(hits[i] / n) for i in range(len(head_widths))}
    out["mean"] = float(np.mean(list(out.values())))
    return out


def train_model(model: Model, x_train, y_train, loss_kind: str, epochs: int, batch_size: int,
                seed: int, schedule: NoiseSchedule | None = None, lr: float = 0.1,
                momentum: float = 0.9, weight_decay: float = 1e-4, mixup_alpha: float = 0.0,
                eval_data=None) -> list[dict]:
    """Epoch loop shared by run_experiment and the estimator front door.

    Returns one history record per epoch. All randomness comes from named
    substreams of ``seed``, so the history is a pure function of the inputs.
    """
    n = len(x_train)
    opt = MomentumSGD(model.parameters(), lr, momentum, weight_decay)
    lr_schedule = LRSchedule(lr, epochs)
    buckets = NoiseBucketMetrics() if model.conditioned else None
    history = []
    for epoch in range(epochs):
        opt.lr = lr_schedule.lr_at(epoch)
        order = substream(seed, "order", epoch).permutation(n)
        step_rng = substream(seed, "step", epoch)
        if buckets is not None:
            buckets.reset()
        loss_sum = 0.0
        correct_sum = 0.0
        last = None
        try:
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                last = train_step(
                    model, (x_train[idx], y_train[idx]), schedule, opt, step_rng,
                    mixup_alpha=mixup_alpha, loss_kind=loss_kind,
                )
                loss_sum += last["loss"] * last["batch_size"]
                correct_sum += last["correct"].sum()
                if buckets is not None:
                    buckets.update(last["t"], last["correct"], last["per_example_loss"])
        except TrainingDivergedError as err:
            err.snapshot["epoch"] = epoch
            raise
        record = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": loss_sum / n,
            "train_accuracy": correct_sum / n,
        }
        if buckets is not None:
            record["bucket_accuracy"] = buckets.accuracy()
            record["bucket_loss"] = buckets.mean_loss()
            last_buckets = NoiseBucketMetrics()
            last_buckets.update(last["t"], last["correct"], last["per_example_loss"])
            record["last_batch_accuracy"] = last_buckets.accuracy()
        if eval_data is not None:
            x_eval, labels_eval = eval_data
            record["eval"] = evaluate(model, x_eval, labels_eval, substream(seed, "eval", epoch))
        history.append(record)
    return history


# ----------------------------------------------------------------------
# experiment runner


def prepare_data(config: ExperimentConfig):
    """Generate train/test splits for the configured task.

    Returns (x_train, labels_train, x_test, labels_test, heads, loss_kind,
    input_shape, chance_accuracy).
    """
    if config.task == "blobs":
        task = BlobTask(config.blobs_classes, config.blobs_dim, config.blobs_sigma)
        x_tr, lab_tr = gen_blobs(task, config.blobs_train_size, substream(config.seed, "data", "train"))
        x_te, lab_te = gen_blobs(task, config.blobs_test_size, substream(config.seed, "data", "test"))
        heads = [config.blobs_classes]
        return x_tr, lab_tr, x_te, lab_te, heads, "softmax", config.blobs_dim, 1.0 / config.blobs_classes
    x_tr, lab_tr = gen_shapes(config.shapes_train_size, substream(config.seed, "data", "train"))
    x_te, lab_te = gen_shapes(config.shapes_test_size, substream(config.seed, "data", "test"))
    return x_tr, lab_tr, x_te, lab_te, [2, 2], "bce", (1, 64, 64), 0.5


def _fmt(value) -> str:
    return format(float(value), ".10g")


def history_to_csv(history: list[dict], head_widths) -> str:
    """Render epoch records as the metrics CSV (deterministic formatting)."""
    lines = ["epoch,split,head,metric,value,bucket"]
    for rec in history:
        e = rec["epoch"]
        lines.append(f"{e},train,,loss,{_fmt(rec['train_loss'])},")
        lines.append(f"{e},train,mean,accuracy,{_fmt(rec['train_accuracy'])},")
        lines.append(f"{e},train,,lr,{_fmt(rec['lr'])},")
        for metric in ("bucket_accuracy", "bucket_loss", "last_batch_accuracy"):
            values = rec.get(metric)
            if values is None:
                continue
            for b, v in enumerate(values):
                if np.isnan(v):
                    continue
                lines.append(f"{e},train,,{metric},{_fmt(v)},{b}")
        ev = rec.get("eval")
        if ev is not None:
            for i in range(len(head_widths)):
                lines.append(f"{e},eval,head{i},accuracy,{_fmt(ev[f'head{i}'])},")
            lines.append(f"{e},eval,mean,accuracy,{_fmt(ev['mean'])},")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig) -> dict:
    """Train per config; write metrics CSV, checkpoint, and summary JSON.

    Returns the summary record. Fully reproducible: the metrics CSV is a pure
    function of (config, seed).
    """
    config.resolve().validate()
    started = time.time()
    out_dir = resolve_output_dir(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    echo = config_echo(config)
    atomic_write_text(
        out_dir / "config.txt",
        "".join(f"{k} = {v}\n" for k, v in echo.items()),
    )

    x_tr, lab_tr, x_te, lab_te, heads, loss_kind, input_shape, chance = prepare_data(config)
    y_tr = encode_targets(lab_tr, heads)
    schedule = config.noise_schedule()
    model = Model(config.model_config(heads), input_shape, schedule, seed=config.seed)

    try:
        history = train_model(
            model, x_tr, y_tr, loss_kind, config.epochs, config.batch_size, config.seed,
            schedule=schedule, lr=config.lr, momentum=config.momentum,
            weight_decay=config.weight_decay, mixup_alpha=config.mixup_alpha,
            eval_data=(x_te, lab_te),
        )
    except TrainingDivergedError as err:
        atomic_write_text(out_dir / "diagnostic.json", json.dumps(err.snapshot, indent=2))
        raise

    csv_path = out_dir / "metrics.csv"
    atomic_write_text(csv_path, history_to_csv(history, heads))
    ckpt_json, _ = save_checkpoint(model, out_dir / "model.ckpt")

    summary = {
        "task": config.task,
        "mode": config.mode,
        "seed": config.seed,
        "epochs": config.epochs,
        "final_train_loss": history[-1]["train_loss"],
        "final_eval": history[-1]["eval"],
        "chance_accuracy": chance,
        "parameter_counts": model.parameter_counts(),
        "wall_time_s": time.time() - started,
        "config": echo,
        "metrics_csv": str(csv_path),
        "checkpoint": str(ckpt_json),
    }
    atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True))
    return summary
