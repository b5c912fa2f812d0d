"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every operation builds a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them.  Node ids come from a
process-wide monotone counter, so sorting the nodes reachable from a loss by
id reproduces construction order; ``backward`` walks that order in reverse.

The graph is define-by-run: nothing is cached between steps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()

# exp(709.78) is the float64 ceiling
_EXP_MAX = 709.0


class ShapeError(ValueError):
    """Operand shapes do not satisfy the primitive's shape rule."""


class DomainError(ArithmeticError):
    """A log/exp argument left the representable domain."""


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """A node in the computation graph.

    ``data`` is never mutated after construction; only ``grad`` is written,
    and only by :func:`backward`.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "kind", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, *, kind: str = "leaf",
                 parents: tuple = (), backward_fn: Callable | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self.kind = kind
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        if self.data.size != 1:
            raise TypeError(f"only size-1 tensors convert to float, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # operator sugar; python scalars and arrays become constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(kind: str, data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, kind=kind)
    return Tensor(data, True, kind=kind, parents=tuple(parents), backward_fn=backward_fn)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    # grads are never written in place, so read-only views are safe to keep
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_same_or_scalar(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not match")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar("add", a, b)
    out_data = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make("add", out_data, (a, b), bw)


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar("subtract", a, b)
    out_data = a.data - b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make("subtract", out_data, (a, b), bw)


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_or_scalar("multiply", a, b)
    out_data = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make("multiply", out_data, (a, b), bw)


def broadcast_add(a, b) -> Tensor:
    """``a + b`` under numpy broadcasting, e.g. a (n, k) batch plus a (k,) bias."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"broadcast-add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make("broadcast-add", out_data, (a, b), bw)


def broadcast_multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"broadcast-multiply: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make("broadcast-multiply", out_data, (a, b), bw)


def negate(a) -> Tensor:
    a = as_tensor(a)
    return _make("negate", -a.data, (a,), lambda g: _accumulate(a, -g))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make("square", a.data * a.data, (a,), lambda g: _accumulate(a, 2.0 * a.data * g))


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)
    return _make("relu", out_data, (a,), lambda g: _accumulate(a, g * (a.data > 0)))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _make("leaky-relu", a.data * scale, (a,), lambda g: _accumulate(a, g * scale))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _make("tanh", out_data, (a,), lambda g: _accumulate(a, g * (1.0 - out_data * out_data)))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function evaluated on the branch that never exponentiates a positive number."""
    x = _as_array(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def stable_softplus(x: np.ndarray) -> np.ndarray:
    x = _as_array(x)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = stable_sigmoid(a.data)
    return _make("sigmoid", out_data, (a,), lambda g: _accumulate(a, g * out_data * (1.0 - out_data)))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = stable_softplus(a.data)
    return _make("softplus", out_data, (a,), lambda g: _accumulate(a, g * stable_sigmoid(a.data)))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(~(a.data > 0)):
        raise DomainError(f"log: argument has {np.count_nonzero(~(a.data > 0))} non-positive or NaN entries")
    return _make("log", np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data))


def exp(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data > _EXP_MAX) or np.any(np.isnan(a.data)):
        raise DomainError(f"exp: argument max {np.nanmax(a.data)!r} overflows float64")
    out_data = np.exp(a.data)
    return _make("exp", out_data, (a,), lambda g: _accumulate(a, g * out_data))


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(a)) = -softplus(-a)``, stable for any finite input."""
    return negate(softplus(negate(a)))


# ------------------------------------------------------------------ structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not (n, k) x (k, m)")
    out_data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make("matmul", out_data, (a, b), bw)


def sum_reduce(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make("sum-reduce", out_data, (a,), bw)


def mean_reduce(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ShapeError("mean-reduce: empty input")
    count = a.data.size if axis is None else a.shape[axis]
    out_data = a.data.mean(axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g / count, a.shape))

    return _make("mean-reduce", out_data, (a,), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out_data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in ts]} do not concatenate on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _make("concat", out_data, ts, bw)


def take(a, index) -> Tensor:
    """Basic (non-fancy) indexing, e.g. ``t[:, :2]``."""
    a = as_tensor(a)
    out_data = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accumulate(a, full)

    return _make("slice", out_data, (a,), bw)


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "matmul": matmul,
    "relu": relu,
    "leaky-relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "softplus": softplus,
    "negate": negate,
    "mean-reduce": mean_reduce,
    "sum-reduce": sum_reduce,
    "concat": concat,
    "broadcast-add": broadcast_add,
    "square": square,
}


def apply_primitive(kind: str, inputs: Sequence, **params) -> Tensor:
    """Dispatch by primitive name; ``params`` carries e.g. ``slope`` or ``axis``."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}; expected one of {sorted(PRIMITIVES)}") from None
    if kind == "concat":
        return fn(list(inputs), **params)
    return fn(*inputs, **params)


# ------------------------------------------------------------------- backward


@dataclass(frozen=True)
class ComputationGraph:
    """The nodes reachable from a root, in construction order."""

    nodes: tuple[Tensor, ...]

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationGraph":
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            t = stack.pop()
            if t.node_id in seen or not t.requires_grad:
                continue
            seen[t.node_id] = t
            stack.extend(t._parents)
        return cls(tuple(seen[k] for k in sorted(seen)))

    def leaves(self) -> list[Tensor]:
        return [t for t in self.nodes if t.is_leaf]


def backward(loss: Tensor, graph: ComputationGraph | None = None) -> dict[Tensor, np.ndarray]:
    """Populate ``grad`` on every leaf reachable from ``loss``.

    Intermediate gradients are released once propagated.  Returns a map from
    each trainable leaf to its gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if graph is None:
        graph = ComputationGraph.trace(loss)
    if not loss.requires_grad:
        return {}
    for t in graph.nodes:
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for t in reversed(graph.nodes):
        if t._backward is not None and t.grad is not None:
            t._backward(t.grad)
            t.grad = None
    return {t: (t.grad if t.grad is not None else np.zeros_like(t.data)) for t in graph.leaves()}


def leaf_params(arrays: dict[str, np.ndarray], trainable: bool = True) -> dict[str, Tensor]:
    return {name: Tensor(value, requires_grad=trainable) for name, value in arrays.items()}


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Named gradients for ``params``; parameters the loss ignores get zeros."""
    leaf_grads = backward(loss)
    return {name: leaf_grads.get(t, np.zeros_like(t.data)) for name, t in params.items()}


def finite_difference_grad(f: Callable[[np.ndarray], float], params, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``params``, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    base = _as_array(params.data if isinstance(params, Tensor) else params)
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        plus = base.copy().reshape(-1)
        minus = base.copy().reshape(-1)
        plus[i] += step
        minus[i] -= step
        flat[i] = (float(f(plus.reshape(base.shape))) - float(f(minus.reshape(base.shape)))) / (2.0 * step)
    return grad


def global_norm(grads: Iterable[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
