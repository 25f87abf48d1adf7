"""Dense float64 tensors with reverse-mode automatic differentiation.

Each op builds a new :class:`Tensor` holding its parents and a closure that
maps the output gradient to one gradient per parent. :func:`backward` walks
the graph in reverse topological order, visiting every node once, and
accumulates into the ``grad`` buffers of leaf tensors that require grad.

Binary elementwise ops only accept equal shapes (or a scalar operand);
broadcasting is explicit through :func:`broadcast_to`. ``matmul`` follows
numpy's batched semantics over leading dimensions.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GraphConsumedError, NonFiniteError

GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False) -> Tensor:
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> Tensor:
        return mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._consumed = False
    out._op = op
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = grad_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _binary_operands(a, b, op: str) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ (broadcast explicitly)")
    return a, b


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    v = x.data
    t = np.tanh(GELU_C * (v + GELU_K * v**3))

    def grad_fn(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make(0.5 * v * (1.0 + t), (x,), grad_fn, "gelu")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "gelu": gelu, "relu": relu,
                "sigmoid": sigmoid, "tanh": tanh}


def elementwise(kind: str, *args) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {kind!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul: cannot batch {a.shape} x {b.shape}") from exc

    def grad_fn(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), grad_fn, "matmul")


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes; by default swap the last two."""
    if axes is None:
        if x.ndim < 2:
            raise DimensionError(f"transpose needs rank >= 2, got {x.shape}")
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}") from exc
    return _make(out, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


def getitem(x: Tensor, index) -> Tensor:
    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(x.data[index]), (x,), grad_fn, "getitem")


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise DimensionError("concat of an empty list")
    ndim = xs[0].ndim
    ax = axis % ndim
    for t in xs[1:]:
        if t.ndim != ndim or any(t.shape[i] != xs[0].shape[i] for i in range(ndim) if i != ax):
            raise DimensionError(f"concat along axis {axis}: incompatible shapes "
                                 f"{[t.shape for t in xs]}")
    splits = np.cumsum([t.shape[ax] for t in xs])[:-1]
    return _make(np.concatenate([t.data for t in xs], axis=ax), xs,
                 lambda g: tuple(np.split(g, splits, axis=ax)), "concat")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise DimensionError("stack of an empty list")
    ax = axis % (xs[0].ndim + 1)
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in xs]
    return concat(expanded, axis=ax)


# ---------------------------------------------------------------------------
# reductions


def _check_axis(x: Tensor, axis):
    if axis is None:
        if x.data.size == 0:
            raise DimensionError("reduction over an empty tensor")
        return
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    if x.shape[axis] == 0:
        raise DimensionError(f"reduction over empty axis {axis}")


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_axis(x, axis)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), grad_fn, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_axis(x, axis)
    count = x.data.size if axis is None else x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make(np.asarray(out), (x,), grad_fn, "mean")


def max_(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first maximiser."""
    _check_axis(x, axis)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g, axis=axis)
        return (full,)

    return _make(out if keepdims else np.squeeze(out, axis=axis), (x,), grad_fn, "max")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (x,), grad_fn, "softmax")


def reduce(kind: str, x, axis: int = -1) -> Tensor:
    """Dispatch ``mean``/``max``/``softmax`` over one axis, or ``concat`` a list."""
    if kind == "mean":
        return mean(x, axis)
    if kind == "max":
        return max_(x, axis)
    if kind == "softmax":
        return softmax(x, axis)
    if kind == "concat":
        return concat(x, axis)
    raise ValueError(f"unknown reduction {kind!r}")


# ---------------------------------------------------------------------------
# normalisation


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    d = x.shape[-1] if x.ndim else 0
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    reduce_axes = tuple(range(x.ndim - 1))

    def grad_fn(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), grad_fn, "layer_norm")


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy of ``(B, K)`` logits against class indices."""
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape}, targets {targets.shape}")
    k = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ValueError(f"class index out of range for {k} classes")
    t = targets.astype(np.int64)
    b = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = np.mean(lse - z[np.arange(b), t])

    def grad_fn(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(b), t] -= 1.0
        return (g * p / b,)

    return _make(np.asarray(loss), (logits,), grad_fn, "cross_entropy")


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean sigmoid binary cross-entropy over every (sample, label) entry."""
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise DimensionError(f"binary_cross_entropy: logits {logits.shape}, targets {t.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("binary targets must be 0 or 1")
    v = logits.data
    # log(1 + e^v) - t v, written so it cannot overflow
    loss = np.mean(np.maximum(v, 0.0) - v * t + np.log1p(np.exp(-np.abs(v))))
    n = v.size

    def grad_fn(g):
        return (g * (_sigmoid(v) - t) / n,)

    return _make(np.asarray(loss), (logits,), grad_fn, "binary_cross_entropy")


def loss(kind: str, logits: Tensor, targets) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(logits, targets)
    if kind == "binary_cross_entropy":
        return binary_cross_entropy(logits, targets)
    raise ValueError(f"unknown loss {kind!r}")


# ---------------------------------------------------------------------------
# reverse pass


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss_tensor: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    The graph is released afterwards; a second call on the same loss raises.
    """
    if loss_tensor.data.size != 1 or loss_tensor.ndim > 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss_tensor.shape}")
    if loss_tensor._consumed:
        raise GraphConsumedError("graph already consumed by a previous backward()")
    loss_tensor._consumed = True
    if not loss_tensor.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss_tensor): np.ones_like(loss_tensor.data)}
    for node in reversed(_topological(loss_tensor)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._backward = None
        node._parents = ()
