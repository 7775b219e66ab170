"""Dense float64 tensors with reverse-mode differentiation.

The op set is exactly what the segmentation stack needs: shared-MLP affine
maps, leaky ReLU, axis softmax, neighbor gathering with scatter-add backward,
concatenation, axis reductions, broadcast add/multiply, log, and dropout.
Each op records its parents and a backward closure on the produced `Tensor`;
`Tensor.backward()` replays the closures once each in reverse topological
order, accumulating gradients additively at fan-out.

Non-finite values are rejected at every op boundary rather than propagated.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ._kernels import scatter_add
from .rng import Rng

__all__ = [
    "Tensor", "affine", "leaky_relu", "softmax_over_axis", "gather_rows",
    "concat_last_axis", "reduce_sum_axis", "reduce_max_axis", "elementwise_mul",
    "add", "scale", "log", "reshape", "dropout", "gradient_check", "zero_grads",
    "matvec",
]


def _check_finite(data: np.ndarray, op: str) -> None:
    if data.size and not (np.isfinite(data.min()) and np.isfinite(data.max())):
        raise FloatingPointError(f"non-finite values produced by {op}")


class Tensor:
    """Shaped float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        # asarray keeps 0-d scalars 0-d (ascontiguousarray would promote to 1-d)
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def accumulate(self, grad: np.ndarray) -> None:
        if not (self.requires_grad or self._parents):
            return  # constant: nothing upstream wants this gradient
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self, gradient: Optional[np.ndarray] = None) -> None:
        """Reverse sweep from this tensor; seeds with ones unless given."""
        if gradient is None:
            gradient = np.ones_like(self.data)
        else:
            gradient = np.ascontiguousarray(gradient, dtype=np.float64)
            if gradient.shape != self.data.shape:
                raise ValueError("seed gradient shape mismatch")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(gradient)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node.grad = None  # interior value: free once propagated


def _result(data: np.ndarray, op: str, parents: Sequence[Tensor],
            backward: Optional[Callable[[np.ndarray], None]]) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    tracked = tuple(p for p in parents if p.requires_grad or p._parents)
    if tracked:
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tracked
        out._backward = backward
    return out


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Shared MLP primitive: y = x @ w + b over the last axis."""
    din, dout = w.data.shape
    if x.data.shape[-1] != din or b.data.shape != (dout,):
        raise ValueError(f"affine shape mismatch: x {x.data.shape}, w {w.data.shape}, b {b.data.shape}")
    x2 = x.data.reshape(-1, din)
    y = (x2 @ w.data + b.data).reshape(x.data.shape[:-1] + (dout,))

    def backward(grad):
        g2 = grad.reshape(-1, dout)
        x.accumulate((g2 @ w.data.T).reshape(x.data.shape))
        w.accumulate(x2.T @ g2)
        b.accumulate(g2.sum(axis=0))

    return _result(y, "affine", (x, w, b), backward)


def matvec(x: Tensor, w: Tensor) -> Tensor:
    """Bias-free shared map: y = x @ w (score heads use this form)."""
    din, dout = w.data.shape
    if x.data.shape[-1] != din:
        raise ValueError(f"matvec shape mismatch: x {x.data.shape}, w {w.data.shape}")
    x2 = x.data.reshape(-1, din)
    y = (x2 @ w.data).reshape(x.data.shape[:-1] + (dout,))

    def backward(grad):
        g2 = grad.reshape(-1, dout)
        x.accumulate((g2 @ w.data.T).reshape(x.data.shape))
        w.accumulate(x2.T @ g2)

    return _result(y, "matvec", (x, w), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    neg = x.data < 0
    y = np.where(neg, slope * x.data, x.data)

    def backward(grad):
        x.accumulate(np.where(neg, slope * grad, grad))

    return _result(y, "leaky_relu", (x,), backward)


def softmax_over_axis(x: Tensor, axis: int) -> Tensor:
    """Numerically stabilized softmax along one axis; slices sum to 1."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        dot = (grad * y).sum(axis=axis, keepdims=True)
        x.accumulate(y * (grad - dot))

    return _result(y, "softmax", (x,), backward)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """x: (N, C), idx: (Q, K) -> (Q, K, C); backward scatter-adds into x."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or idx.ndim != 2:
        raise ValueError("gather_rows expects x (N, C) and idx (Q, K)")
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise IndexError("gather index out of range")
    y = x.data[idx]

    def backward(grad):
        out = np.zeros_like(x.data)
        scatter_add(out, idx, np.ascontiguousarray(grad))
        x.accumulate(out)

    return _result(y, "gather_rows", (x,), backward)


def concat_last_axis(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    y = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.data.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def backward(grad):
        for p, g in zip(parts, np.split(grad, splits, axis=-1)):
            p.accumulate(g)

    return _result(y, "concat", tuple(parts), backward)


def reduce_sum_axis(x: Tensor, axis: int) -> Tensor:
    y = x.data.sum(axis=axis)

    def backward(grad):
        x.accumulate(np.broadcast_to(np.expand_dims(grad, axis), x.data.shape).copy())

    return _result(y, "reduce_sum", (x,), backward)


def reduce_max_axis(x: Tensor, axis: int) -> Tensor:
    """Max over an axis; gradient flows to the first occurrence of the max."""
    y = x.data.max(axis=axis)
    arg = x.data.argmax(axis=axis)
    hot = np.zeros_like(x.data)
    np.put_along_axis(hot, np.expand_dims(arg, axis), 1.0, axis=axis)

    def backward(grad):
        x.accumulate(hot * np.expand_dims(grad, axis))

    return _result(y, "reduce_max", (x,), backward)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    y = a.data * b.data

    def backward(grad):
        a.accumulate(_unbroadcast(grad * b.data, a.data.shape))
        b.accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return _result(y, "mul", (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    y = a.data + b.data

    def backward(grad):
        a.accumulate(_unbroadcast(grad, a.data.shape))
        b.accumulate(_unbroadcast(grad, b.data.shape))

    return _result(y, "add", (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    y = x.data * c

    def backward(grad):
        x.accumulate(grad * c)

    return _result(y, "scale", (x,), backward)


def log(x: Tensor) -> Tensor:
    y = np.log(x.data)

    def backward(grad):
        x.accumulate(grad / x.data)

    return _result(y, "log", (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    y = x.data.reshape(shape)

    def backward(grad):
        x.accumulate(grad.reshape(x.data.shape))

    return _result(y.copy(), "reshape", (x,), backward)


def dropout(x: Tensor, p: float, train: bool, rng: Optional[Rng] = None) -> Tensor:
    """Inverted dropout: keeps scale 1/(1-p) in training, identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not train or p == 0.0:
        def backward_id(grad):
            x.accumulate(grad)
        return _result(x.data.copy(), "dropout", (x,), backward_id)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.uniforms(x.data.shape) >= p) / (1.0 - p)
    y = x.data * mask

    def backward(grad):
        x.accumulate(grad * mask)

    return _result(y, "dropout", (x,), backward)


def gradient_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
                   eps: float = 1e-5, probe_limit: Optional[int] = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per entry is |analytic - numeric| / max(1, |analytic|,
    |numeric|).  With `probe_limit` set, at most that many evenly spaced
    entries per input are perturbed, which keeps large parameter tensors
    checkable in bounded time.
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
    zero_grads(inputs)
    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError("gradient_check expects a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    for t, ana in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if probe_limit is not None and n > probe_limit:
            positions = np.linspace(0, n - 1, probe_limit).astype(np.int64)
        else:
            positions = np.arange(n)
        ana_flat = ana.reshape(-1)
        for pos in positions:
            orig = flat[pos]
            flat[pos] = orig + eps
            hi = float(f(*inputs).data)
            flat[pos] = orig - eps
            lo = float(f(*inputs).data)
            flat[pos] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = ana_flat[pos]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
