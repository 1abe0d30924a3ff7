"""Parameterized layers on top of the autodiff engine.

Initialization is keyed by (seed, parameter name): two models built with the
same seed share identical weights for identically named parameters, whatever
else differs between them. Mode comparisons (conditioned vs plain) rely on
this to get bit-identical backbones without copying weights around.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, conv2d, matmul
from .errors import ConfigError
from .rngs import substream


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """Affine map x @ w + b with w of shape (in_dim, out_dim).

    Layers feeding a normalization should pass bias=False: a pre-norm bias is
    redundant with the norm's own shift, and under SGD it can grow until it
    drowns the input-dependent part of the activations.
    """

    def __init__(self, name: str, in_dim: int, out_dim: int, seed: int,
                 row_scale=None, bias: bool = True):
        if in_dim < 1 or out_dim < 1:
            raise ConfigError(f"{name}: linear dims must be >= 1, got ({in_dim}, {out_dim})")
        rng = substream(seed, "init", name)
        w = xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        if row_scale is not None:
            w = w * np.asarray(row_scale, dtype=np.float64)[:, None]
        self.w = Parameter(f"{name}.w", w)
        self.b = Parameter(f"{name}.b", np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.w.tensor)
        if self.b is not None:
            out = out + self.b.tensor
        return out

    def parameters(self) -> list[Parameter]:
        return [self.w] if self.b is None else [self.w, self.b]


class Conv2d:
    """3x3-style convolution layer, NCHW. Same bias=False convention as Linear."""

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        seed: int,
        kernel: int = 3,
        stride: int = 1,
        padding: int = 1,
        bias: bool = True,
    ):
        rng = substream(seed, "init", name)
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        w = xavier_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, fan_out)
        self.w = Parameter(f"{name}.w", w)
        self.b = Parameter(f"{name}.b", np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding
        self.out_channels = out_channels

    def __call__(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.w.tensor, stride=self.stride, padding=self.padding)
        if self.b is not None:
            out = out + self.b.tensor.reshape(1, self.out_channels, 1, 1)
        return out

    def parameters(self) -> list[Parameter]:
        return [self.w] if self.b is None else [self.w, self.b]


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling via reshape; spatial dims must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"avg_pool2 needs even spatial dims, got {(h, w)}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
