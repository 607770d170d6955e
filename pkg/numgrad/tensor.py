from __future__ import annotations

import contextlib
import itertools
import logging
import threading
import warnings
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from hypothesis.extra.numpy import arrays
from hypothesis.strategies import SearchStrategy, builds, floats, just

"""
Dense tensors carrying a reverse-mode gradient tape.

Every op records a Node (op name, parents, backward rule) on its output when
any input requires a gradient. Nodes are numbered on creation, so parents are
always older than children and sorting by that number is a topological order.
"""

logger = logging.getLogger(__name__)

ArrayLike = np.ndarray | float | int | Sequence
Index = int | slice | np.ndarray | tuple


class ShapeError(ValueError):
    """Operand dimensions do not fit the op signature"""

    def __init__(self, op: str, *shapes: tuple[int, ...], detail: str = "") -> None:
        self.op = op
        self.shapes = shapes
        self.detail = detail
        super().__init__(op, shapes, detail)

    def __str__(self) -> str:
        got = " and ".join(str(tuple(s)) for s in self.shapes)
        msg = f"ShapeError: {self.op} got {got}"
        return f"{msg} ({self.detail})" if self.detail else msg


class ConfigError(ValueError):
    """Inconsistent or out-of-range configuration"""


class NonFiniteError(ValueError):
    """A value that must be finite is not"""


# default float type for new tensors, per thread
_local = threading.local()


def default_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def precision(dtype) -> Iterator[np.dtype]:
    """Switch the default float type, e.g. `with precision(np.float64):` for gradient checks"""
    previous = default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield _local.dtype
    finally:
        _local.dtype = previous


_sequence = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    """One op record on the tape"""

    __slots__ = ("op", "parents", "backward", "seq")

    def __init__(self, op: str, parents: tuple[Tensor, ...], backward: BackwardFn) -> None:
        self.op = op
        self.parents = parents
        self.backward = backward
        self.seq = next(_sequence)

    def __repr__(self) -> str:
        return f"<{self.op}#{self.seq}>"


class Tensor:
    """
    Dense n-dimensional float array with an optional tape node.
    The array itself is read-only: ops always build new tensors.
    """

    __slots__ = ("data", "requires_grad", "node", "grad")

    # helping mypy
    data: np.ndarray
    requires_grad: bool
    node: Node | None
    grad: np.ndarray | None

    @staticmethod
    def strategy(shape: tuple[int, ...], lo: float = -3.0, hi: float = 3.0) -> SearchStrategy:
        """hypothesis builder for finite float64 tensors of a given shape"""
        return builds(
            Tensor,
            arrays(np.float64, shape, elements=floats(lo, hi, allow_nan=False, allow_infinity=False)),
            dtype=just(np.float64),
        )

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None) -> None:
        arr = np.array(data, dtype=dtype or default_dtype())
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.node = None
        self.grad = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> Tensor:
        # skips the defensive copy, only for arrays freshly produced by an op
        t = cls.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = False
        t.node = None
        t.grad = None
        return t

    # array-like surface

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, detail="only single-element tensors")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        op = f", op={self.node.op}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}{op})"

    def __len__(self) -> int:
        return self.shape[0]

    # operators

    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Index) -> Tensor:
        return getitem(self, index)

    # method forms

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis: int, keepdims: bool = False) -> Tensor:
        return tmax(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def tanh(self) -> Tensor:
        return tanh(self)

    def relu(self) -> Tensor:
        return relu(self)

    def abs(self) -> Tensor:
        return tabs(self)


def as_tensor(value: Tensor | ArrayLike, like: Tensor | None = None) -> Tensor:
    """Wrap constants, matching the float type of `like` when given"""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def apply_op(op: str, out: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    Wrap a forward result and record it on the tape when any parent requires a gradient.
    `backward` maps the output gradient to one gradient (or None) per parent.
    This is also the extension point for custom primitives.
    """
    t = Tensor._wrap(np.asarray(out))
    if any(p.requires_grad for p in parents):
        t.requires_grad = True
        t.node = Node(op, tuple(parents), backward)
    return t


class Tape:
    """Ordered op records reachable from a root, oldest first"""

    __slots__ = ("records",)

    def __init__(self, root: Tensor) -> None:
        seen = set()
        stack = [root]
        records: list[Tensor] = []
        while stack:
            t = stack.pop()
            if t.node is None or id(t) in seen:
                continue
            seen.add(id(t))
            records.append(t)
            stack.extend(p for p in t.node.parents if p.requires_grad)
        records.sort(key=lambda t: t.node.seq)  # type: ignore[union-attr]
        self.records = records

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Tensor]:
        yield from self.records

    def leaves(self) -> list[Tensor]:
        found: dict[int, Tensor] = {}
        for t in self.records:
            for p in t.node.parents:  # type: ignore[union-attr]
                if p.requires_grad and p.node is None:
                    found.setdefault(id(p), p)
        return list(found.values())


def eval_graph(expression: Callable[..., Tensor], *args, **kwargs) -> Tensor:
    """
    Evaluate a tensor expression. The tape is recorded as a side effect iff
    some leaf requires a gradient. Broadcasting failures surface as ShapeError.
    """
    try:
        out = expression(*args, **kwargs)
    except ValueError as exc:
        if isinstance(exc, ShapeError):
            raise
        shapes = [a.shape for a in args if isinstance(a, Tensor)]
        raise ShapeError(getattr(expression, "__name__", "expression"), *shapes, detail=str(exc)) from exc
    if not isinstance(out, Tensor):
        out = as_tensor(out)
    return out


def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> list[np.ndarray]:
    """
    Replay the tape from a scalar loss, accumulating d(loss)/d(leaf) into leaf.grad.
    Returns the gradients of `leaves` when given, in order.
    """
    if loss.size != 1:
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")
    wanted = list(leaves) if leaves is not None else []

    if loss.node is None:
        warnings.warn("backward() on a detached graph: all gradients are zero", RuntimeWarning)
        logger.warning("backward on detached loss %r", loss)
        for leaf in wanted:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
        return [leaf.grad for leaf in wanted]  # type: ignore[misc]

    tape = Tape(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(tape.records):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        node = t.node
        assert node is not None
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"backward of {node.op}", pg.shape, parent.shape, detail="gradient shape")
            if parent.node is None:
                parent.grad = pg.astype(parent.dtype, copy=True) if parent.grad is None else parent.grad + pg
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + pg
            else:
                pending[id(parent)] = pg

    for leaf in wanted:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    return [leaf.grad for leaf in wanted]  # type: ignore[misc]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches shape"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(op, a.shape, b.shape, detail="not broadcastable") from exc


# elementwise binary


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, like=ta)
    _broadcast_check("add", ta, tb)
    return apply_op(
        "add",
        ta.data + tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)),
    )


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, like=ta)
    _broadcast_check("sub", ta, tb)
    return apply_op(
        "sub",
        ta.data - tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)),
    )


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, like=ta)
    _broadcast_check("mul", ta, tb)
    return apply_op(
        "mul",
        ta.data * tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)),
    )


def div(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, like=ta)
    _broadcast_check("div", ta, tb)
    out = ta.data / tb.data
    return apply_op(
        "div",
        out,
        (ta, tb),
        lambda g: (
            _unbroadcast(g / tb.data, ta.shape),
            _unbroadcast(-g * out / tb.data, tb.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading dims (both operands ≥ 2-D)"""
    b = as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape, detail="operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape, detail=f"inner dims {a.shape[-1]} != {b.shape[-2]}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError("matmul", a.shape, b.shape, detail="batch dims not broadcastable") from exc

    def grads(g: np.ndarray):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return apply_op("matmul", out, (a, b), grads)


# elementwise unary


def neg(x: Tensor) -> Tensor:
    return apply_op("neg", -x.data, (x,), lambda g: (-g,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return apply_op("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return apply_op("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return apply_op("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return apply_op("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return apply_op("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def tabs(x: Tensor) -> Tensor:
    return apply_op("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def power(x: Tensor, exponent: float) -> Tensor:
    out = np.power(x.data, exponent)
    return apply_op(
        "pow",
        out,
        (x,),
        lambda g: (g * exponent * np.power(x.data, exponent - 1),),
    )


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return apply_op("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


# reductions


def _expand(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)) if g.ndim else g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    return apply_op(
        "sum",
        np.asarray(out, dtype=x.dtype),
        (x,),
        lambda g: (np.array(_expand(g, x.shape, axis, keepdims)),),
    )


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size // max(1, np.asarray(out).size)
    return apply_op(
        "mean",
        np.asarray(out, dtype=x.dtype),
        (x,),
        lambda g: (np.array(_expand(g, x.shape, axis, keepdims)) / count,),
    )


def tmax(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; the gradient goes to the first maximal entry"""
    idx = np.argmax(x.data, axis=axis)
    picked = np.expand_dims(idx, axis)
    out = np.take_along_axis(x.data, picked, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def grads(g: np.ndarray):
        full = np.zeros_like(x.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, picked, gk, axis=axis)
        return (full,)

    return apply_op("max", out, (x,), grads)


# shape ops


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", x.shape, tuple(shape)) from exc
    return apply_op("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return apply_op("transpose", out, (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x: Tensor, index: Index) -> Tensor:
    out = x.data[index]

    def grads(g: np.ndarray):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return apply_op("getitem", np.array(out), (x,), grads)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", detail="nothing to concatenate")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", *[t.shape for t in tensors]) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return apply_op(
        "concat",
        out,
        tuple(tensors),
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, np.expand_dims(t.data, axis).shape) for t in tensors], axis=axis)


def pad(x: Tensor, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding"""
    out = np.pad(x.data, widths)
    slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return apply_op("pad", out, (x,), lambda g: (g[slices],))


def zeros(shape: tuple[int, ...], dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or default_dtype()))


def ones(shape: tuple[int, ...], dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or default_dtype()))
