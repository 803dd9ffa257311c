"""Dense tensors with tape-based reverse-mode differentiation.

Every value the model touches is a :class:`Tensor` wrapping a numpy array.
Operations record their inputs and an adjoint closure; :meth:`Tensor.backward`
walks the recorded graph in reverse topological order and accumulates
gradients into every tensor that requires them.

Broadcasting is deliberately narrow. Two operands may differ only when

* one of them is a parameter without the leading batch extents (a shared
  weight applied to every instance), or
* the trailing two extents are ``(1, d)`` or ``(f, 1)`` against ``(f, d)``
  with identical leading extents (a context row or a per-field weight
  applied across a matrix).

Everything else raises :class:`ShapeError`.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operands violate an operation's shape contract."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A numpy array plus an optional accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE if dtype is None else dtype)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            _raise_not_scalar(self)
        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"backward/item needs a scalar tensor, got shape {t.shape}")


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every input before its consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(_needs_grad(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


# broadcasting ------------------------------------------------------------

def _check_broadcast(a: tuple[int, ...], b: tuple[int, ...], op: str) -> None:
    if a == b:
        return
    big, small = (a, b) if len(a) >= len(b) else (b, a)
    if len(small) < len(big) and big[len(big) - len(small):] == small:
        return  # shared parameter against a batch
    if len(a) == len(b) and len(a) >= 2 and a[:-2] == b[:-2]:
        (fa, da), (fb, db) = a[-2:], b[-2:]
        if (fa == 1 and da == db) or (fb == 1 and da == db):
            return  # 1 x d row against f x d
        if (da == 1 and fa == fb) or (db == 1 and fa == fb):
            return  # f x 1 column against f x d
    raise ShapeError(f"{op}: incompatible shapes {a} and {b}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Element-wise product with the restricted broadcasting rules."""
    a, b = _pair(a, b)
    _check_broadcast(a.shape, b.shape, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), backward, "mul")


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make(a.data + a.dtype.type(c), (a,), lambda g: (g,), "add_scalar")


def rsub_scalar(c: float, a: Tensor) -> Tensor:
    """``c - a``."""
    return _make(a.dtype.type(c) - a.data, (a,), lambda g: (-g,), "rsub_scalar")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2 * g * ad,), "square")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    with np.errstate(over="ignore"):
        out = 1 / (1 + np.exp(-x))  # exp overflow -> inf -> exactly 0
    return _make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """``x`` for ``x >= 0``, ``slope * x`` otherwise; ``slope`` is a single learnable scalar."""
    if slope.data.size != 1:
        raise ShapeError(f"prelu: slope must hold one value, got shape {slope.shape}")
    x = a.data
    s = slope.data.reshape(())
    neg = x < 0
    out = np.where(neg, s * x, x)

    def backward(g):
        ga = np.where(neg, g * s, g)
        gs = np.sum(np.where(neg, g * x, 0), dtype=np.float64)
        return ga, np.asarray(gs, dtype=x.dtype).reshape(slope.shape)

    return _make(out, (a, slope), backward, "prelu")


def log(a: Tensor) -> Tensor:
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; the gradient is zero where clamping bites."""
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clip")


# reductions and shape ----------------------------------------------------

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), backward, "sum")


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.data.size)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 dims, got {a.shape}")
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack along the second-to-last axis (rows of a matrix)."""
    if not tensors:
        raise ShapeError("concat_rows needs at least one tensor")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(first) or t.shape[:-2] != first[:-2] or t.shape[-1] != first[-1]:
            raise ShapeError(f"concat_rows: incompatible shapes {first} and {t.shape}")
    sizes = [t.shape[-2] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=-2))

    return _make(np.concatenate([t.data for t in tensors], axis=-2), tuple(tensors), backward, "concat_rows")


# linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a shared ``k x n`` matrix or carries the same leading
    (batch) extents as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} and {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise ShapeError(f"matmul: batch extents differ for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    shared = bd.ndim == 2
    k, n = bd.shape[-2:]
    if shared:
        # one 2-D product is far faster than many small batched ones
        out = (ad.reshape(-1, k) @ bd).reshape(*ad.shape[:-1], n)
    else:
        out = ad @ bd

    def backward(g):
        if shared:
            g2 = g.reshape(-1, n)
            ga = (g2 @ bd.T).reshape(ad.shape)
            gb = ad.reshape(-1, k).T @ g2
        else:
            ga = g @ np.swapaxes(bd, -1, -2)
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def row_softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, with per-row max subtraction."""
    x = a.data
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (a,), backward, "row_softmax")


def take_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a ``n x d`` table; gradients scatter-add back."""
    index = np.asarray(index)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"row index out of range for table with {table.shape[0]} rows")
    n, d = table.shape

    def backward(g):
        flat = index.reshape(-1)
        gg = g.reshape(-1, d)
        # bincount sums in index order: deterministic
        out = np.empty((n, d), dtype=g.dtype)
        for k in range(d):
            out[:, k] = np.bincount(flat, weights=gg[:, k], minlength=n)
        return (out,)

    return _make(table.data[index], (table,), backward, "take_rows")


# parameters --------------------------------------------------------------

def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
