"""Reverse-mode automatic differentiation on numpy arrays.

Every value is a float64 ``Tensor`` wrapping an ndarray. Operations record
their inputs and a backward closure on the output node; ``backward()`` on a
scalar loss walks the recorded graph in reverse creation order and
accumulates gradients into every node with ``requires_grad``.

All math is done in 64-bit so finite-difference gradient checks can be tight.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = ["Tensor", "ShapeError", "no_grad", "is_grad_enabled"]

_node_counter = itertools.count()

# Recording can be disabled globally (e.g. during rollouts) so ops run as
# plain numpy without building a graph.
_grad_enabled = True


class ShapeError(ValueError):
    """Raised when a primitive receives inconsistently shaped operands."""


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def is_grad_enabled() -> bool:
    return _grad_enabled


def _as_array(value) -> np.ndarray:
    if isinstance(value, np.ndarray):
        if value.dtype != np.float64:
            return value.astype(np.float64)
        return value
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """A float64 array plus an optional gradient of identical shape."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "_id", "name")

    # make numpy defer to the reflected operators instead of broadcasting
    # object arrays when an ndarray is the left operand
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()
        self._id = next(_node_counter)
        self.name = name

    # -- graph bookkeeping -------------------------------------------------

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
        return self.data.item()

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Backpropagate from this node; it must hold a single scalar.

        Node ids increase monotonically with creation, and eager recording
        guarantees creation order is a valid forward order, so visiting the
        reachable set by descending id is a valid reverse topological order.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        reachable: dict[int, Tensor] = {}
        stack = [self]
        while stack:
            node = stack.pop()
            if node._id in reachable:
                continue
            reachable[node._id] = node
            stack.extend(node._parents)
        self.accumulate_grad(np.ones_like(self.data))
        for node_id in sorted(reachable, reverse=True):
            node = reachable[node_id]
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return powc(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def __getitem__(self, key):
        return getitem(self, key)


def ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- elementwise primitives -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as err:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from err

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as err:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from err

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as err:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from err

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = a.data / b.data
    except ValueError as err:
        raise ShapeError(f"div: {a.shape} vs {b.shape}") from err

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def neg(a) -> Tensor:
    a = ensure_tensor(a)

    def backward(g):
        a.accumulate_grad(-g)

    return _make(-a.data, (a,), backward)


def powc(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = ensure_tensor(a)
    data = a.data**exponent

    def backward(g):
        a.accumulate_grad(g * exponent * a.data ** (exponent - 1))

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = ensure_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * data)

    return _make(data, (a,), backward)


def log(a) -> Tensor:
    a = ensure_tensor(a)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a) -> Tensor:
    """Square root with the denominator floored so sqrt(0) backpropagates 0
    instead of inf (subgradient convention for norms at zero)."""
    a = ensure_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        a.accumulate_grad(g / (2.0 * np.maximum(data, 1e-300)))

    return _make(data, (a,), backward)


def absval(a) -> Tensor:
    a = ensure_tensor(a)

    def backward(g):
        a.accumulate_grad(g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def tanh(a) -> Tensor:
    a = ensure_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return _make(data, (a,), backward)


def relu(a) -> Tensor:
    a = ensure_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a.accumulate_grad(g * (a.data > 0.0))

    return _make(data, (a,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to ``a``."""
    a, b = ensure_tensor(a), ensure_tensor(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * take_a, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * ~take_a, b.shape))

    return _make(data, (a, b), backward)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = ensure_tensor(a), ensure_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * take_a, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * ~take_a, b.shape))

    return _make(data, (a, b), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through the interior."""
    a = ensure_tensor(a)
    data = np.clip(a.data, lo, hi)
    interior = (a.data > lo) & (a.data < hi)

    def backward(g):
        a.accumulate_grad(g * interior)

    return _make(data, (a,), backward)


# -- matmul and shape primitives ---------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    try:
        data = a.data @ b.data
    except ValueError as err:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}") from err

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                # stacked @ weight: flatten the batch dims into one GEMM
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
                b.accumulate_grad(gb)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
                b.accumulate_grad(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = ensure_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = ensure_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / data.size

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.shape) / count)

    return _make(data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = ensure_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.shape))

    return _make(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = ensure_tensor(a)
    data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g):
        a.accumulate_grad(g.transpose(inverse))

    return _make(data, (a,), backward)


def getitem(a, key) -> Tensor:
    a = ensure_tensor(a)
    data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        a.accumulate_grad(full)

    return _make(data, (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [ensure_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(index)])

    return _make(data, tuple(tensors), backward)


# -- softmax family -----------------------------------------------------------


def softmax(a, axis=-1) -> Tensor:
    """Numerically stable softmax. Subtracting the (detached) max is exact:
    softmax is shift invariant, so the gradient is unaffected."""
    a = ensure_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(data * (g - dot))

    return _make(data, (a,), backward)


def log_softmax(a, axis=-1) -> Tensor:
    a = ensure_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    probs = np.exp(data)

    def backward(g):
        a.accumulate_grad(g - probs * g.sum(axis=axis, keepdims=True))

    return _make(data, (a,), backward)


def logsumexp(a, axis=-1, keepdims=False) -> Tensor:
    a = ensure_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = np.log(s) + m
    probs = e / s
    if not keepdims:
        data = np.squeeze(data, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(g * probs)

    return _make(data, (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    a = ensure_tensor(a)
    data = np.logaddexp(0.0, a.data)
    sig = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a.accumulate_grad(g * sig)

    return _make(data, (a,), backward)


# -- lookup / selection -------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather from an embedding table; backward scatter-adds."""
    ids = np.asarray(ids)
    if ids.size and (ids.max() >= table.shape[0] or ids.min() < 0):
        raise ShapeError(
            f"embedding: id out of range for table with {table.shape[0]} rows"
        )
    data = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table.accumulate_grad(full)

    return _make(data, (table,), backward)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor (per-row column pick)."""
    a = ensure_tensor(a)
    idx = np.asarray(idx)
    rows = np.arange(a.shape[0])
    data = a.data[rows, idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        a.accumulate_grad(full)

    return _make(data, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time so evaluation
    needs no rescaling. The mask is drawn from the supplied generator."""
    if p <= 0.0:
        return a
    a = ensure_tensor(a)
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    data = a.data * keep

    def backward(g):
        a.accumulate_grad(g * keep)

    return _make(data, (a,), backward)
