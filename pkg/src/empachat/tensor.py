"""Dense float64 tensors with reverse-mode differentiation.

A Tensor wraps a contiguous row-major numpy float64 array. Operations build a
tape of backward closures; calling ``backward()`` on a scalar loss walks the
tape in reverse topological order and accumulates gradients additively into
every reachable tensor with ``requires_grad``.

Design constraints honored here:
- all values are float64; slicing/transposing copies (no strided views),
- gradient accumulation is additive, ``zero_grad`` is explicit,
- softmax/log-softmax are max-stabilized,
- with debug checks enabled, every forward op asserts finite outputs.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_MASK_NEG = -1e9  # finite stand-in for -inf in additive attention masks

_grad_enabled = True
_debug_checks = False


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def set_debug_checks(enabled: bool) -> None:
    """Toggle finite-value assertions after every forward op."""
    global _debug_checks
    _debug_checks = bool(enabled)


def grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that disables tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # Parameters carry a zero gradient buffer from birth so an unused
        # parameter reads as exactly-zero gradient after backward.
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accumulate(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += delta

    def backward(self) -> None:
        """Populate gradients of everything this scalar depends on."""
        if self.size != 1:
            raise ShapeError(
                f"backward requires a scalar tensor, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # Convenience arithmetic; the module-level functions are the full API.
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _make(out_data: np.ndarray, parents: Sequence[Tensor], backward=None) -> Tensor:
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor(out_data)
    if _grad_enabled and backward is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad, b.shape))

    out = _make(out_data, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward():
        if a.requires_grad:
            a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

    out = _make(out_data, (a, b), backward)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out_data = a.data * s

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad * s)

    out = _make(out_data, (a,), backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Supported shapes: 2D x 2D, ND x 2D (shared right matrix, e.g. a learned
    projection applied at every position), and ND x ND with identical leading
    dimensions (e.g. per-head attention scores).
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul leading dimensions disagree: {a.shape} vs {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                lhs = a.data.reshape(-1, a.shape[-1])
                b._accumulate(lhs.T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    out = _make(out_data, (a, b), backward)
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out_data = np.ascontiguousarray(np.transpose(a.data, axes))
    inverse = tuple(np.argsort(axes))

    def backward():
        if a.requires_grad:
            a._accumulate(np.ascontiguousarray(np.transpose(out.grad, inverse)))

    out = _make(out_data, (a,), backward)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad.reshape(a.shape))

    out = _make(out_data, (a,), backward)
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]

    def backward():
        if table.requires_grad:
            delta = np.zeros_like(table.data)
            np.add.at(delta, ids.reshape(-1), out.grad.reshape(-1, table.shape[-1]))
            table._accumulate(delta)

    out = _make(out_data, (table,), backward)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / np.sum(ex, axis=axis, keepdims=True)

    def backward():
        if a.requires_grad:
            s = out.data
            g = out.grad
            a._accumulate(s * (g - np.sum(g * s, axis=axis, keepdims=True)))

    out = _make(out_data, (a,), backward)
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward():
        if a.requires_grad:
            g = out.grad
            soft = np.exp(out.data)
            a._accumulate(g - soft * np.sum(g, axis=axis, keepdims=True))

    out = _make(out_data, (a,), backward)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if x.shape[-1] < 1:
        raise ShapeError("layer_norm needs a non-empty last axis")
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward():
        g = out.grad
        if gamma.requires_grad:
            reduce_axes = tuple(range(g.ndim - 1))
            gamma._accumulate((g * xhat).sum(axis=reduce_axes))
        if beta.requires_grad:
            reduce_axes = tuple(range(g.ndim - 1))
            beta._accumulate(g.sum(axis=reduce_axes))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv_std * (gx - m1 - xhat * m2))

    out = _make(out_data, (x, gamma, beta), backward)
    return out


def gelu(x: Tensor) -> Tensor:
    """Tanh-form GELU used by BERT-family feed-forward layers."""
    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)
    out_data = 0.5 * x.data * (1.0 + t)

    def backward():
        if x.requires_grad:
            du = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
            dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du
            x._accumulate(out.grad * dx)

    out = _make(out_data, (x,), backward)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode."""
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad * keep)

    out = _make(x.data * keep, (x,), backward)
    return out


def tensor_sum(a: Tensor) -> Tensor:
    out_data = np.array(a.data.sum())

    def backward():
        if a.requires_grad:
            a._accumulate(np.full(a.shape, out.grad.reshape(-1)[0]))

    out = _make(out_data, (a,), backward)
    return out


def gather_last(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick one entry along the last axis per position: out[...] = a[..., index[...]]."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != a.shape[:-1]:
        raise ShapeError(
            f"gather index shape {index.shape} must match leading dims of {a.shape}"
        )
    flat = a.data.reshape(-1, a.shape[-1])
    rows = np.arange(flat.shape[0])
    out_data = flat[rows, index.reshape(-1)].reshape(index.shape)

    def backward():
        if a.requires_grad:
            delta = np.zeros_like(flat)
            np.add.at(delta, (rows, index.reshape(-1)), out.grad.reshape(-1))
            a._accumulate(delta.reshape(a.shape))

    out = _make(out_data, (a,), backward)
    return out


def parameters_from(named: dict[str, Tensor]) -> Iterable[Tensor]:
    return named.values()


def zero_all_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()
