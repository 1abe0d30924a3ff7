"""Embedding of (y_noisy, t) and conditional normalization layers.

The noise level t passes through fixed sin/cos Fourier features; the noisy
target and the featurized t go through two small Mish MLPs whose outputs are
concatenated into one embedding vector. Normalization layers then consume the
embedding through zero-initialized linear projections producing per-channel
scale and shift, applied as (1 + dgamma) * xhat + dbeta, so a fresh model is
exactly its unconditional counterpart.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, concat, matmul
from .errors import ConfigError, DomainError, ValidationError
from .layers import Linear
from .rngs import substream

NORM_KINDS = ("batch", "group", "layer")
_EPS = 1e-5

# The highest default frequency is 2^15; undamped first-layer weights on the
# t branch would make the embedding slew by many radians over dt = 1e-4.
# Columns feeding from frequency f are scaled by min(1, REF/f) at init so the
# embedding starts smooth in t while the frequencies stay available to learn.
_FREQ_DAMP_REF = 8.0


class FourierTimeEmbedding:
    """Fixed sin/cos features of t at geometrically spaced frequencies."""

    def __init__(self, num_frequencies: int = 16, base_frequency: float = 1.0):
        if num_frequencies < 1:
            raise ConfigError(f"num_frequencies must be >= 1, got {num_frequencies}")
        if base_frequency <= 0:
            raise ConfigError(f"base_frequency must be > 0, got {base_frequency}")
        self.num_frequencies = int(num_frequencies)
        self.frequencies = base_frequency * 2.0 ** np.arange(self.num_frequencies)

    @property
    def output_dim(self) -> int:
        return 2 * self.num_frequencies

    def __call__(self, t) -> np.ndarray:
        """Map t (scalar or (N,)) to (N, 2F): sin block then cos block."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise DomainError(f"time must lie in [0, 1], got range [{t.min()}, {t.max()}]")
        phase = 2.0 * np.pi * t[:, None] * self.frequencies[None, :]
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class ConditioningEmbedder:
    """Two 2-layer Mish MLPs over (y_noisy, fourier(t)), outputs concatenated."""

    def __init__(
        self,
        target_width: int,
        embed_width: int = 128,
        num_frequencies: int = 16,
        seed: int = 0,
        name: str = "embed",
    ):
        if embed_width < 2 or embed_width % 2:
            raise ConfigError(f"embed_width must be even and >= 2, got {embed_width}")
        if target_width < 1:
            raise ConfigError(f"target_width must be >= 1, got {target_width}")
        self.target_width = int(target_width)
        self.embed_width = int(embed_width)
        half = embed_width // 2
        self.fourier = FourierTimeEmbedding(num_frequencies)
        # per-coordinate frequency of the fourier output, sin block then cos
        coord_freq = np.concatenate([self.fourier.frequencies, self.fourier.frequencies])
        damp = np.minimum(1.0, _FREQ_DAMP_REF / coord_freq)
        self.y_fc1 = Linear(f"{name}.y.fc1", target_width, half, seed)
        self.y_fc2 = Linear(f"{name}.y.fc2", half, half, seed)
        self.t_fc1 = Linear(f"{name}.t.fc1", self.fourier.output_dim, half, seed, row_scale=damp)
        self.t_fc2 = Linear(f"{name}.t.fc2", half, half, seed)

    def __call__(self, y_noisy, t) -> Tensor:
        y = as_tensor(y_noisy)
        if y.ndim != 2 or y.shape[1] != self.target_width:
            raise ConfigError(
                f"embed: expected y_noisy of shape (N, {self.target_width}), got {y.shape}"
            )
        if not np.all(np.isfinite(y.data)):
            raise ValidationError("embed: y_noisy must be finite")
        phi = as_tensor(self.fourier(t))
        if phi.shape[0] != y.shape[0]:
            raise ValidationError(f"embed: got {y.shape[0]} targets but {phi.shape[0]} times")
        hy = self.y_fc2(self.y_fc1(y).mish())
        ht = self.t_fc2(self.t_fc1(phi).mish())
        return concat([hy, ht], axis=1)

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in (self.y_fc1, self.y_fc2, self.t_fc1, self.t_fc2):
            out.extend(layer.parameters())
        return out


# ----------------------------------------------------------------------
# normalization


def _check_kind(kind: str):
    if kind not in NORM_KINDS:
        raise ConfigError(f"unknown norm kind {kind!r}, expected one of {NORM_KINDS}")


def _standardize(x: Tensor, axes) -> Tensor:
    mu = x.mean(axis=axes, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    return centered / (var + _EPS).sqrt()


class _NormBase:
    """Statistics part shared by plain and conditional normalization."""

    def __init__(self, kind: str, channels: int, num_groups: int, momentum: float = 0.1):
        _check_kind(kind)
        if channels < 1:
            raise ConfigError(f"channels must be >= 1, got {channels}")
        if kind == "group":
            if num_groups < 1 or channels % num_groups:
                raise ConfigError(
                    f"group norm needs num_groups dividing channels, got "
                    f"{num_groups} groups for {channels} channels"
                )
        self.kind = kind
        self.channels = int(channels)
        self.num_groups = int(num_groups)
        self.momentum = momentum
        if kind == "batch":
            self.running_mean = np.zeros(channels)
            self.running_var = np.ones(channels)

    def _check_input(self, x: Tensor):
        if x.ndim not in (2, 4):
            raise ConfigError(f"normalization expects 2-d or 4-d input, got shape {x.shape}")
        if x.shape[1] != self.channels:
            raise ConfigError(
                f"normalization channel mismatch: layer has {self.channels}, input {x.shape}"
            )

    def _normalize(self, x: Tensor, training: bool) -> Tensor:
        self._check_input(x)
        four_d = x.ndim == 4
        if self.kind == "layer":
            return _standardize(x, (1, 2, 3) if four_d else (1,))
        if self.kind == "group":
            g = self.num_groups
            if four_d:
                n, c, h, w = x.shape
                xg = x.reshape(n, g, c // g, h, w)
                return _standardize(xg, (2, 3, 4)).reshape(n, c, h, w)
            n, c = x.shape
            xg = x.reshape(n, g, c // g)
            return _standardize(xg, (2,)).reshape(n, c)
        # batch norm: per-channel stats over batch (and spatial) axes
        axes = (0, 2, 3) if four_d else (0,)
        if training:
            batch_mean = x.data.mean(axis=axes)
            batch_var = x.data.var(axis=axes)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * batch_mean
            self.running_var = (1 - m) * self.running_var + m * batch_var
            return _standardize(x, axes)
        shape = (1, -1, 1, 1) if four_d else (1, -1)
        mean = self.running_mean.reshape(shape)
        std = np.sqrt(self.running_var + _EPS).reshape(shape)
        return (x - mean) * (1.0 / std)

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        if self.kind == "batch":
            return [("running_mean", self.running_mean), ("running_var", self.running_var)]
        return []


class PlainNorm(_NormBase):
    """Normalization with a learned per-channel affine (gamma, beta)."""

    def __init__(self, name: str, kind: str, channels: int, num_groups: int = 4):
        super().__init__(kind, channels, num_groups)
        self.name = name
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        xhat = self._normalize(x, training)
        shape = (1, self.channels, 1, 1) if x.ndim == 4 else (1, self.channels)
        return xhat * self.gamma.tensor.reshape(*shape) + self.beta.tensor.reshape(*shape)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]


class ConditionalNorm(_NormBase):
    """Normalization whose scale/shift are projections of the embedding.

    The base normalization carries no affine of its own; zero-initialized
    projections make the layer exactly the plain normalization with gamma = 1,
    beta = 0 at init. The embedding passes through Mish before projection.
    """

    def __init__(
        self,
        name: str,
        kind: str,
        channels: int,
        embed_width: int,
        num_groups: int = 4,
        seed: int = 0,
    ):
        super().__init__(kind, channels, num_groups)
        self.name = name
        self.embed_width = int(embed_width)
        self.w_gamma = Parameter(f"{name}.w_gamma", np.zeros((embed_width, channels)))
        self.b_gamma = Parameter(f"{name}.b_gamma", np.zeros(channels))
        self.w_beta = Parameter(f"{name}.w_beta", np.zeros((embed_width, channels)))
        self.b_beta = Parameter(f"{name}.b_beta", np.zeros(channels))

    def __call__(self, x: Tensor, emb: Tensor, training: bool = False) -> Tensor:
        if emb.ndim != 2 or emb.shape[1] != self.embed_width:
            raise ConfigError(
                f"{self.name}: expected embedding of shape (N, {self.embed_width}), "
                f"got {emb.shape}"
            )
        if emb.shape[0] != x.shape[0]:
            raise ConfigError(
                f"{self.name}: batch mismatch between input {x.shape} and embedding {emb.shape}"
            )
        xhat = self._normalize(x, training)
        h = emb.mish()
        dgamma = matmul(h, self.w_gamma.tensor) + self.b_gamma.tensor
        dbeta = matmul(h, self.w_beta.tensor) + self.b_beta.tensor
        if x.ndim == 4:
            n = x.shape[0]
            dgamma = dgamma.reshape(n, self.channels, 1, 1)
            dbeta = dbeta.reshape(n, self.channels, 1, 1)
        return xhat * (1.0 + dgamma) + dbeta

    def parameters(self) -> list[Parameter]:
        return [self.w_gamma, self.b_gamma, self.w_beta, self.b_beta]
