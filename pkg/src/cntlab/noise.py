"""Forward corruption process for targets.

Targets are corrupted with the closed-form marginal of a variance-preserving
diffusion: given a clean target y and a time t in [0, 1],

    y(t) = mean_coeff(t) * y + spread(t) * noise

with mean_coeff(t) = exp(-B(t)/2) and spread(t) = sqrt(1 - exp(-B(t))), where
B(t) is the integral of the linear rate beta(s) = beta_min + s (beta_max -
beta_min) from 0 to t. Only the marginal is ever needed; no SDE is simulated.

The ``laplace`` family reuses the same mean coefficient and plugs the spread
into the Laplace scale parameter as written (its actual standard deviation is
sqrt(2) times that scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ValidationError

FAMILIES = ("gaussian", "laplace")
MODES = ("cnt", "only-noise")


@dataclass(frozen=True)
class NoiseSchedule:
    """Corruption schedule. ``only-noise`` mode pins beta_min to beta_max so the
    signal decays almost immediately and the conditioning input is noise."""

    beta_min: float = 0.2
    beta_max: float = 20.0
    family: str = "gaussian"
    mode: str = "cnt"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown noise family {self.family!r}, expected one of {FAMILIES}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}, expected one of {MODES}")
        if not np.isfinite(self.beta_min) or self.beta_min < 0:
            raise ConfigError(f"beta_min must be finite and >= 0, got {self.beta_min}")
        if not np.isfinite(self.beta_max) or self.beta_max < self.beta_min:
            raise ConfigError(
                f"beta_max must be finite and >= beta_min, got beta_max={self.beta_max} "
                f"with beta_min={self.beta_min}"
            )
        if self.mode == "only-noise":
            object.__setattr__(self, "beta_min", float(self.beta_max))
        object.__setattr__(self, "beta_min", float(self.beta_min))
        object.__setattr__(self, "beta_max", float(self.beta_max))


@dataclass(frozen=True)
class NoisyTarget:
    """A corrupted target with the ingredients that produced it."""

    y_noisy: np.ndarray
    t: float | np.ndarray
    y_clean: np.ndarray


def _check_time(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"time must lie in [0, 1], got range [{t.min()}, {t.max()}]")
    return t


def beta(schedule: NoiseSchedule, t):
    """Instantaneous corruption rate beta(t)."""
    t = _check_time(t)
    return schedule.beta_min + t * (schedule.beta_max - schedule.beta_min)


def beta_integral(schedule: NoiseSchedule, t):
    """B(t) = integral of beta from 0 to t, in closed form."""
    t = _check_time(t)
    return schedule.beta_min * t + 0.5 * (schedule.beta_max - schedule.beta_min) * t * t


def marginal_params(schedule: NoiseSchedule, t):
    """Return (mean_coeff, spread) of the marginal at time t.

    For the gaussian family the spread is the standard deviation; for the
    laplace family it is the scale parameter.
    """
    b = beta_integral(schedule, t)
    decay = np.exp(-b)
    mean_coeff = np.exp(-0.5 * b)
    spread = np.sqrt(np.maximum(1.0 - decay, 0.0))
    return mean_coeff, spread


def sample_laplace(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-scale Laplace draws via the inverse CDF."""
    u = rng.random(shape) - 0.5
    return -np.sign(u) * np.log(np.maximum(1.0 - 2.0 * np.abs(u), np.finfo(np.float64).tiny))


def corrupt(y_clean: np.ndarray, t, schedule: NoiseSchedule, rng: np.random.Generator) -> NoisyTarget:
    """Draw y(t) | y(0) = y_clean from the marginal.

    y_clean may be a single vector (d,) with scalar t, or a batch (N, d) with
    t of shape (N,) applied row-wise.
    """
    y_clean = np.asarray(y_clean, dtype=np.float64)
    if not np.all(np.isfinite(y_clean)):
        raise ValidationError("corrupt: y_clean must be finite")
    t = _check_time(t)
    if y_clean.ndim == 2 and t.ndim == 1:
        if t.shape[0] != y_clean.shape[0]:
            raise ValidationError(
                f"corrupt: got {y_clean.shape[0]} targets but {t.shape[0]} times"
            )
        mean_coeff, spread = marginal_params(schedule, t)
        mean_coeff = mean_coeff[:, None]
        spread = spread[:, None]
    elif y_clean.ndim == 1 and t.ndim == 0:
        mean_coeff, spread = marginal_params(schedule, t)
    else:
        raise ValidationError(
            f"corrupt: expected (d,) with scalar t or (N, d) with (N,) t, "
            f"got y {y_clean.shape} and t {t.shape}"
        )
    if schedule.family == "gaussian":
        noise = rng.standard_normal(y_clean.shape)
    else:
        noise = sample_laplace(rng, y_clean.shape)
    y_noisy = mean_coeff * y_clean + spread * noise
    return NoisyTarget(y_noisy=y_noisy, t=t if t.ndim else float(t), y_clean=y_clean)


def sample_time(rng: np.random.Generator, mode: str = "train", size=None):
    """Training draws t ~ U[0, 1]; inference pins t = 1 (pure noise regime)."""
    if mode == "train":
        return rng.random(size)
    if mode == "inference":
        if size is None:
            return 1.0
        return np.ones(size)
    raise ConfigError(f"unknown time-sampling mode {mode!r}, expected 'train' or 'inference'")
