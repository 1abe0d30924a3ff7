"""Reverse-mode automatic differentiation on numpy arrays.

A small tape-based engine: each operation returns a new ``Tensor`` that
remembers its parents and a closure mapping the output gradient to parent
gradients. ``backward()`` walks the tape in reverse topological order.

Everything is float64. Gradients accumulate into ``.grad`` across backward
calls until explicitly zeroed; each backward pass uses its own scratch
buffers, so calling backward twice on the same graph exactly doubles the
accumulated gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UsageError, ValidationError


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], list] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # backward pass

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``.grad`` for every reachable leaf.

        Leaves are nodes with no parents (parameters, inputs). Intermediate
        nodes keep ``grad=None``; their gradients live only in per-call
        scratch buffers. ``self`` must be a scalar. Repeated calls add another
        full copy of the gradient (accumulation semantics).
        """
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor with no graph attached")

        # iterative post-order topological sort (avoids recursion limits)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        # scratch gradients for this pass only; never mutated in place so
        # views returned by closures are safe to hold
        scratch: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = scratch.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in scratch:
                    scratch[key] = scratch[key] + pg
                else:
                    scratch[key] = pg

        for node in topo:
            if node._parents:
                continue
            g = scratch.get(id(node))
            if g is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g

    # ------------------------------------------------------------------
    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bwd(g):
            return [(a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape))]

        return _node(a.data + b.data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bwd(g):
            return [(a, -g)]

        return _node(-a.data, (a,), bwd)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bwd(g):
            return [
                (a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)),
            ]

        return _node(a.data * b.data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bwd(g):
            return [
                (a, _unbroadcast(g / b.data, a.data.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
            ]

        return _node(a.data / b.data, (a, b), bwd)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise UsageError("only scalar exponents are supported")
        a, n = self, float(exponent)

        def bwd(g):
            return [(a, g * n * a.data ** (n - 1.0))]

        return _node(a.data**n, (a,), bwd)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    # ------------------------------------------------------------------
    # shape ops

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self

        def bwd(g):
            return [(a, g.reshape(a.data.shape))]

        return _node(a.data.reshape(shape), (a,), bwd)

    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def bwd(g):
            return [(a, _expand_reduced(g, a.data.shape, axis, keepdims))]

        return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        a = self
        count = a.data.size if axis is None else _axis_count(a.data.shape, axis)

        def bwd(g):
            return [(a, _expand_reduced(g, a.data.shape, axis, keepdims) / count)]

        return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd)

    # ------------------------------------------------------------------
    # pointwise nonlinearities

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bwd(g):
            return [(a, g * out_data)]

        return _node(out_data, (a,), bwd)

    def log(self):
        a = self

        def bwd(g):
            return [(a, g / a.data)]

        return _node(np.log(a.data), (a,), bwd)

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def bwd(g):
            return [(a, g * 0.5 / out_data)]

        return _node(out_data, (a,), bwd)

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def bwd(g):
            return [(a, g * (1.0 - out_data * out_data))]

        return _node(out_data, (a,), bwd)

    def sigmoid(self):
        a = self
        out_data = _sigmoid(a.data)

        def bwd(g):
            return [(a, g * out_data * (1.0 - out_data))]

        return _node(out_data, (a,), bwd)

    def relu(self):
        a = self
        mask = a.data > 0

        def bwd(g):
            return [(a, g * mask)]

        return _node(a.data * mask, (a,), bwd)

    def mish(self):
        """x * tanh(softplus(x))."""
        a = self
        sp = np.logaddexp(0.0, a.data)
        tsp = np.tanh(sp)

        def bwd(g):
            # d/dx [x tanh(sp)] = tanh(sp) + x (1 - tanh(sp)^2) sigmoid(x)
            return [(a, g * (tsp + a.data * (1.0 - tsp * tsp) * _sigmoid(a.data)))]

        return _node(a.data * tsp, (a,), bwd)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """Wrap data as a graph leaf that never receives gradients."""
    return Tensor(x, requires_grad=False)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _axis_count(shape, axis) -> int:
    ax = axis if isinstance(axis, tuple) else (axis,)
    n = 1
    for a in ax:
        n *= shape[a % len(shape)]
    return n


def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduced gradient back to the pre-reduction shape."""
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        ax = axis if isinstance(axis, tuple) else (axis,)
        for a in sorted(x % len(shape) for x in ax):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


# ----------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return _node(a.data @ b.data, (a, b), bwd)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation, NCHW layout, no bias.

    x: (N, C_in, H, W); w: (C_out, C_in, kh, kw). Output spatial extent must
    come out integral for the given stride/padding.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d operands, got {x.data.shape} and {w.data.shape}")
    n, c_in, h, wth = x.data.shape
    c_out, c_in_w, kh, kw = w.data.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv2d channel mismatch: input {x.data.shape} vs weight {w.data.shape}")
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"conv2d stride must be a positive integer, got {stride!r}")
    if not isinstance(padding, int) or padding < 0:
        raise ConfigError(f"conv2d padding must be a non-negative integer, got {padding!r}")
    hp, wp = h + 2 * padding, wth + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d kernel {(kh, kw)} larger than padded input {(hp, wp)}")
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ConfigError(
            f"conv2d output extent is not integral: input {(h, wth)}, kernel {(kh, kw)}, "
            f"stride {stride}, padding {padding}"
        )
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # im2col: one big GEMM instead of per-position tensordots
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, c_in, kh, kw),
        strides=(s0, s2 * stride, s3 * stride, s1, s2, s3),
        writeable=False,
    )
    cols = windows.reshape(n * ho * wo, c_in * kh * kw)
    wmat = w.data.reshape(c_out, c_in * kh * kw)
    out = np.ascontiguousarray(
        (cols @ wmat.T).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    )

    def bwd(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        grads = [(w, (gmat.T @ cols).reshape(w.data.shape))]
        if x.requires_grad:
            # col2im: scatter the per-window gradients back onto the padded input
            gc = (gmat @ wmat).reshape(n, ho, wo, c_in, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gc[
                        :, :, i, j
                    ]
            grads.append((x, gxp if padding == 0 else gxp[:, :, padding:-padding, padding:-padding]))
        return grads

    return _node(out, (x, w), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise UsageError("concat of an empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, offsets, axis=axis)
        return list(zip(tensors, pieces))

    return _node(data, tensors, bwd)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) so eval needs no rescale."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    x = as_tensor(x)
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def bwd(g):
        return [(x, g * keep)]

    return _node(x.data * keep, (x,), bwd)


# ----------------------------------------------------------------------
# losses (fused forward+backward for numerical stability)


def softmax_cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean cross entropy between softmax(logits) and soft target rows.

    Target rows must sum to 1 (soft labels from mixup are fine).
    """
    logits = as_tensor(logits)
    target = as_tensor(target)
    if logits.data.ndim != 2 or logits.data.shape != target.data.shape:
        raise ShapeError(
            f"softmax_cross_entropy expects matching 2-d shapes, got {logits.data.shape} "
            f"and {target.data.shape}"
        )
    row_sums = target.data.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ValidationError("softmax_cross_entropy target rows must sum to 1")
    if np.any(target.data < -1e-9):
        raise ValidationError("softmax_cross_entropy target entries must be non-negative")

    n = logits.data.shape[0]
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    logp = z - lse
    loss = -(target.data * logp).sum() / n
    probs = np.exp(logp)

    def bwd(g):
        return [(logits, g * (probs - target.data) / n), (target, g * (-logp) / n)]

    return _node(loss, (logits, target), bwd)


def binary_cross_entropy_with_logits(logits: Tensor, target) -> Tensor:
    """Mean BCE against targets in [0, 1], computed without forming sigmoid(z) first."""
    logits = as_tensor(logits)
    target = as_tensor(target)
    if logits.data.shape != target.data.shape:
        raise ShapeError(
            f"bce_with_logits shape mismatch: {logits.data.shape} vs {target.data.shape}"
        )
    if np.any(target.data < -1e-9) or np.any(target.data > 1.0 + 1e-9):
        raise ValidationError("bce_with_logits targets must lie in [0, 1]")

    z, y = logits.data, target.data
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    size = z.size
    sig = _sigmoid(z)

    def bwd(g):
        return [(logits, g * (sig - y) / size), (target, g * (-z) / size)]

    return _node(per.mean(), (logits, target), bwd)


def stable_softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax on plain arrays (no autodiff), for probability readouts."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ----------------------------------------------------------------------


class Parameter:
    """A named trainable tensor. Its grad buffer always exists and starts zero."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)
        self.tensor.grad = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray:
        return self.tensor.grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.data.shape

    def zero_grad(self) -> None:
        self.tensor.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"
