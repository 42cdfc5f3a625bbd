"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` when at
least one operand requires a gradient. Outside a tape every op is a plain
numpy computation, which is what evaluation and target computations use.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    >>> backward(tape, loss)
    >>> w.grad
    array([[2., 4.]])
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

LOG_CLAMP = 1e-12
LEAKY_SLOPE = 0.2

_local = threading.local()
_tape_ids = itertools.count()


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: tuple[int, int, int] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of differentiable operations for one forward pass."""

    nodes: list = field(default_factory=list)

    def __post_init__(self):
        self.uid = next(_tape_ids)
        self.generation = 0

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: tuple, output: Tensor, fn) -> None:
        output.node_id = (self.uid, self.generation, len(self.nodes))
        self.nodes.append(Node(op, inputs, output, fn))

    def owns(self, t: Tensor) -> bool:
        return t.node_id is not None and t.node_id[:2] == (self.uid, self.generation)

    def clear(self) -> None:
        self.nodes = []
        self.generation += 1


def _result(op: str, inputs: tuple, out: np.ndarray, fn) -> Tensor:
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor.__new__(Tensor)
    result.data = out
    result.grad = None
    result.requires_grad = track
    result.node_id = None
    if track:
        tape.record(op, inputs, result, fn)
    return result


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.owns(loss):
        raise ContractError("loss was not recorded on this tape (or the tape was cleared)")
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    stop = loss.node_id[2]
    for node in reversed(tape.nodes[: stop + 1]):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        for inp, ig in zip(node.inputs, node.backward(g)):
            if ig is None or not inp.requires_grad:
                continue
            if tape.owns(inp):
                key = id(inp)
                pending[key] = pending[key] + ig if key in pending else ig
            else:
                inp.grad = ig.copy() if inp.grad is None else inp.grad + ig


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _result(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _result(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _result(
        "mul", (a, b), a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    return _result("leaky_relu", (x,), x.data * scale, lambda g: (g * scale,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = x.data
    e = np.exp(-np.abs(z))
    y = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _result("exp", (x,), y, lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    """Natural log with the input clamped at ``LOG_CLAMP``."""
    live = x.data > LOG_CLAMP
    clamped = np.maximum(x.data, LOG_CLAMP)
    return _result("log", (x,), np.log(clamped), lambda g: (np.where(live, g / clamped, 0.0),))


# ----------------------------------------------------------------- reductions


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result("sum", (x,), np.asarray(out, dtype=np.float64), fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / float(n))


# ---------------------------------------------------------------- structural


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    return _result(
        "matmul", (a, b), a.data @ b.data,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(x: Tensor) -> Tensor:
    return _result("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


def reshape(x: Tensor, shape) -> Tensor:
    return _result("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(x.shape),))


def take(x: Tensor, index) -> Tensor:
    def fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result("take", (x,), np.array(x.data[index], dtype=np.float64), fn)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    cuts = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _result("concat", parts, out, lambda g: tuple(np.split(g, cuts, axis=axis)))


def softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result("softmax_rows", (x,), y, fn)


def log_softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(out)
    return _result(
        "log_softmax_rows", (x,), out,
        lambda g: (g - p * g.sum(axis=-1, keepdims=True),),
    )
