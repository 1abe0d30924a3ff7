import numpy as np
import pytest

from cntlab.autodiff import Tensor


def numeric_grad(f, arrays, which, index, h=1e-5):
    """Central finite difference of scalar f(*arrays) wrt arrays[which][index]."""
    flat = arrays[which].ravel()
    orig = flat[index]
    flat[index] = orig + h
    fp = f(*arrays)
    flat[index] = orig - h
    fm = f(*arrays)
    flat[index] = orig
    return (fp - fm) / (2.0 * h)


def check_op_grads(op, arrays, rng, coords=20, rel_tol=1e-4, h=1e-5):
    """Compare backward() grads of sum(op(...) * seed) against finite differences.

    op takes Tensors and returns one Tensor; arrays are the float64 operand
    values. Returns the worst relative error seen.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*tensors)
    seed = rng.normal(size=out.data.shape)
    (out * Tensor(seed)).sum().backward()

    def scalar(*vals):
        return float((op(*(Tensor(v) for v in vals)).data * seed).sum())

    worst = 0.0
    for which, arr in enumerate(arrays):
        n = arr.size
        picks = rng.choice(n, size=min(coords, n), replace=False)
        for index in picks:
            num = numeric_grad(scalar, [a.copy() for a in arrays], which, index, h)
            ana = tensors[which].grad.ravel()[index]
            rel = abs(num - ana) / max(1.0, abs(num), abs(ana))
            worst = max(worst, rel)
    assert worst < rel_tol, f"finite-difference mismatch: {worst:.3e}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
