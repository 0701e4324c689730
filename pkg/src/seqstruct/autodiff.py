"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Define-by-run tape: every operation returns a new Tensor holding its value,
its parents, and a closure that pushes gradient back into the parents.
Calling backward() on a scalar root walks the tape in reverse topological
order and accumulates into each leaf's .grad.

Only the operations needed by this package are implemented; all of them are
deterministic (same inputs give bit-identical values and gradients).
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block; values still computed."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray.

    .grad is None until backward() first reaches the tensor, then an ndarray
    of the same shape that further backward() calls accumulate into.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _check: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        # leaves built from user data are validated; op outputs skip the scan
        # (finiteness of intermediates is the caller's contract to monitor)
        if _check and not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # operator sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def sum(self, axis=None, keepdims: bool = False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(data, _check=False)
    if _grad_enabled:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(root: Tensor):
    """Backpropagate from a scalar root, accumulating into leaf .grad.

    Repeated calls keep accumulating, matching the usual += convention.
    The traversal order is deterministic (depth-first over parent tuples),
    so gradients are bit-identical across runs.
    """
    if root.data.shape != ():
        raise ShapeError(f"backward() needs a scalar root, got shape {root.data.shape}")

    # iterative DFS post-order; recursion would overflow on deep tapes
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    # grads already accumulated (by earlier backward calls) must not be
    # re-pushed through this graph: stash them, run a clean pass, add back
    stash = []
    for node in topo:
        if node.grad is not None:
            stash.append((node, node.grad))
            node.grad = None

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    for node, g in stash:
        node.grad = g if node.grad is None else node.grad + g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(data, (a, b), bw)


# ---------------------------------------------------------------------------
# matmul and structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2D@2D, ND@2D (last-axis contraction), 3D@3D batched."""
    ad, bd = a.data, b.data
    if ad.ndim < 1 or bd.ndim < 1:
        raise ShapeError(f"matmul needs arrays, got shapes {ad.shape} and {bd.shape}")
    if bd.ndim == 2:
        if ad.shape[-1] != bd.shape[0]:
            raise ShapeError(f"matmul mismatch: {ad.shape} @ {bd.shape}")
        data = ad @ bd

        def bw(g):
            _accum(a, g @ bd.T)
            ga = ad.reshape(-1, ad.shape[-1])
            _accum(b, ga.T @ g.reshape(-1, bd.shape[1]))

    elif ad.ndim == 3 and bd.ndim == 3:
        if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
            raise ShapeError(f"matmul mismatch: {ad.shape} @ {bd.shape}")
        data = ad @ bd

        def bw(g):
            _accum(a, g @ np.swapaxes(bd, 1, 2))
            _accum(b, np.swapaxes(ad, 1, 2) @ g)

    else:
        raise ShapeError(f"unsupported matmul ranks: {ad.shape} @ {bd.shape}")
    return _node(data, (a, b), bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bw(g):
        _accum(a, np.transpose(g, inv))

    return _node(data, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(data, (a,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _node(data, tuple(tensors), bw)


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows a[idx] along axis 0; scatter-add on the way back."""
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def bw(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    return _node(data, (a,), bw)


def replace_rows(a: Tensor, idx, values) -> Tensor:
    """Copy of a with rows idx overwritten by constant values (no grad to them)."""
    idx = np.asarray(idx, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)
    data = a.data.copy()
    data[idx] = vals

    def bw(g):
        gc = g.copy()
        gc[idx] = 0.0
        _accum(a, gc)

    return _node(data, (a,), bw)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(data, (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def bw(g):
        _accum(a, g * (a.data > 0.0))

    return _node(data, (a,), bw)


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_stable(a.data)

    def bw(g):
        _accum(a, g * s * (1.0 - s))

    return _node(s, (a,), bw)


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _sigmoid_stable(a.data)
    data = a.data * s

    def bw(g):
        _accum(a, g * s * (1.0 + a.data * (1.0 - s)))

    return _node(data, (a,), bw)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bw(g):
        _accum(a, g * data)

    return _node(data, (a,), bw)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log of non-positive value")
    data = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _node(data, (a,), bw)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient flows only where a > floor."""
    data = np.maximum(a.data, floor)

    def bw(g):
        _accum(a, g * (a.data > floor))

    return _node(data, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-shifted)."""
    if a.data.shape[axis] == 0:
        raise ShapeError("softmax along an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        # ds_i/da_j = s_i (delta_ij - s_j)
        dot = (g * s).sum(axis=axis, keepdims=True)
        _accum(a, s * (g - dot))

    return _node(s, (a,), bw)


def layernorm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = a.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"layernorm affine shape mismatch for width {d}")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def bw(g):
        _accum(gain, _unbroadcast(g * xhat, gain.data.shape))
        _accum(bias, _unbroadcast(g, bias.data.shape))
        gx = g * gain.data
        # through the normalization: remove mean and projection on xhat
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        _accum(a, inv * (gx - m1 - xhat * m2))

    return _node(data, (a, gain, bias), bw)


def vecnorm(a: Tensor) -> Tensor:
    """Euclidean norm along the last axis, keepdims. Gradient at 0 is 0."""
    sq = (a.data * a.data).sum(axis=-1, keepdims=True)
    n = np.sqrt(sq)

    def bw(g):
        safe = np.where(n > 0.0, n, 1.0)
        _accum(a, g * a.data / safe * (n > 0.0))

    return _node(n, (a,), bw)
