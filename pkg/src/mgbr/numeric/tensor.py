"""Rank-2 (plus batched rank-2) tensors with a reverse-mode gradient tape.

Every differentiable op computes its forward value with numpy and, when a
:class:`GradientTape` is active and an input requires gradients, appends a
record holding a closure that maps the output adjoint to input adjoints.
Outside a tape the same ops are plain forward evaluation, which is what
evaluation and finite-difference oracles use.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..errors import ContractError, DimensionError, DomainError
from .sparse import SparseMatrix

_node_ids = itertools.count()
_tape_stack: list["GradientTape"] = []


class Tensor:
    """Dense array plus the bookkeeping the tape needs.

    Float arrays keep their dtype (float32 for model state, float64 in
    gradient checks); anything else is stored as float32.
    """

    __slots__ = ("data", "requires_grad", "name", "node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.node = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _lift(other, self))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


class GradientTape:
    """Ordered record of executed ops for one forward/backward pass.

    Use as a context manager around the forward pass, then call
    :meth:`gradient` once; the records are dropped afterwards.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "GradientTape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack.remove(self)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self.records.append((out, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self.records)

    def gradient(self, loss: Tensor, params: Mapping[str, Tensor] | Sequence[Tensor]):
        """Adjoints of a scalar ``loss`` for ``params``.

        Returns a dict keyed like ``params`` for a mapping, a list for a
        sequence. Parameters the loss does not reach get zeros.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise ContractError("tape already consumed by a previous backward pass")
        grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self.records):
            g = grads.pop(out.node, None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward_fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.node in grads:
                    grads[inp.node] = grads[inp.node] + gi
                else:
                    grads[inp.node] = gi
        self.records.clear()
        self.consumed = True

        def adjoint(p: Tensor) -> np.ndarray:
            g = grads.get(p.node)
            return np.zeros_like(p.data) if g is None else g.astype(p.dtype, copy=False)

        if isinstance(params, Mapping):
            return {key: adjoint(p) for key, p in params.items()}
        return [adjoint(p) for p in params]


def active_tape() -> GradientTape | None:
    return _tape_stack[-1] if _tape_stack else None


def backward(loss: Tensor, params, tape: GradientTape | None = None):
    """Gradient map of ``loss`` w.r.t. ``params`` using ``tape`` or the active tape."""
    tape = tape or active_tape()
    if tape is None:
        raise ContractError("backward called with no gradient tape")
    return tape.gradient(loss, params)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(x: Tensor, c: float) -> Tensor:
    return _emit(x.data * x.dtype.type(c), (x,), lambda g: (g * x.dtype.type(c),))


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return _emit(s, (x,), lambda g: (g * s * (1 - s),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return _emit(e, (x,), lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError(f"log of non-positive value (min {x.data.min()})")
    return _emit(np.log(x.data), (x,), lambda g: (g / x.data,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), stable for large |x|; -log sigmoid(m) == softplus(-m)."""
    return _emit(np.logaddexp(x.dtype.type(0), x.data), (x,), lambda g: (g * expit(x.data),))


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        return _emit(np.asarray(x.data.sum(), dtype=x.dtype).reshape(()), (x,),
                     lambda g: (np.broadcast_to(g, x.shape).copy(),))
    out = x.data.sum(axis=axis)
    return _emit(out, (x,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis), 1.0 / n)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows, kept as a (1, n) row."""
    n = x.shape[0]
    out = x.data.mean(axis=0, keepdims=True)
    return _emit(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


# ---------------------------------------------------------------- structural

def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat of an empty list")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _emit(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _emit(out, (x,), lambda g: (g.reshape(x.shape),))


def take(x: Tensor, index) -> Tensor:
    """Gather rows of ``x`` (embedding lookup); duplicate indices accumulate."""
    idx = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise DimensionError(f"take: index out of range for {n} rows")

    def backward_fn(g):
        # scatter-add as a one-hot sparse product; far faster than np.add.at
        flat = idx.reshape(-1)
        onehot = sp.csr_matrix((np.ones(flat.size, dtype=g.dtype), (flat % n, np.arange(flat.size))),
                               shape=(n, flat.size))
        return (np.asarray(onehot @ g.reshape(flat.size, -1)).reshape(x.shape),)

    return _emit(x.data[idx], (x,), backward_fn)


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return _emit(s, (x,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def log_softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _emit(out, (x,), lambda g: (g - s * g.sum(axis=-1, keepdims=True),))


# ---------------------------------------------------------------- products

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m,k)@(k,n), batched (b,m,k)@(b,k,n), or (b,m,k)@(k,n)."""
    if a.data.ndim not in (2, 3) or b.data.ndim not in (2, 3) or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    if a.data.ndim == 3 and b.data.ndim == 3 and a.shape[0] != b.shape[0]:
        raise DimensionError(f"matmul: batch sizes differ in {a.shape} and {b.shape}")
    if a.data.ndim == 2 and b.data.ndim == 3:
        raise DimensionError(f"matmul: unsupported operand ranks {a.shape} and {b.shape}")

    def backward_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if a.data.ndim == 3 and b.data.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            elif a.data.ndim == 3 and a.shape[1] == 1:
                gb = np.swapaxes(a.data, -1, -2) * g  # batched outer product
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _emit(a.data @ b.data, (a, b), backward_fn)


def spmm(adj: SparseMatrix, x: Tensor) -> Tensor:
    """Sparse (rows x cols) times dense (cols x n); the sparse side is constant."""
    if x.data.ndim != 2 or adj.cols != x.shape[0]:
        raise DimensionError(f"spmm: sparse {adj.shape} and dense {x.shape} are not aligned")
    adj.products += 1
    csr = adj.csr.astype(x.dtype, copy=False)
    out = np.asarray(csr @ x.data)
    return _emit(out, (x,), lambda g: (np.asarray(csr.T @ g),))


def count_parameters(params: Iterable[Tensor]) -> int:
    return int(np.sum([p.size for p in params]))
