"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray and remembers how it was computed.
Calling :meth:`Tensor.backward` on a scalar result walks the recorded graph
in reverse topological order and accumulates gradients into every reachable
leaf's ``grad`` buffer.  Gradients accumulate across repeated backward calls
(per-instance losses summing into shared parameters), so optimizers must
call ``zero_grad`` between steps.

Every function in this module is generic: given only ndarrays or scalars it
computes with plain numpy and returns an ndarray; as soon as one operand is
a ``Tensor`` the result is a ``Tensor`` carrying the graph.  Formula code
written against this module therefore runs identically in recorded
(training) and unrecorded (inference) mode.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Union

import numpy as np

Arr = np.ndarray
TensorLike = Union["Tensor", Arr, float, int]


def _as_array(x) -> Arr:
    return np.asarray(x, dtype=np.float64)


def raw(x: TensorLike) -> Arr:
    """The underlying ndarray of ``x`` (identity for non-Tensors)."""
    return x.data if isinstance(x, Tensor) else _as_array(x)


def _unbroadcast(grad: Arr, shape: tuple[int, ...]) -> Arr:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A graph node: float64 data plus the closure that back-propagates it."""

    __slots__ = ("data", "grad", "_parents", "_grad_fn")

    # Keep numpy from consuming ``ndarray <op> Tensor``; python then falls
    # back to the reflected Tensor operator.
    __array_ufunc__ = None

    def __init__(self, data, parents: tuple = (), grad_fn=None):
        self.data = _as_array(data)
        self.grad: Arr | None = None
        self._parents = parents
        self._grad_fn = grad_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self, seed: TensorLike | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if seed is None:
            seed = np.ones_like(self.data)
        order = _topo_order(self)
        _accumulate(self, np.broadcast_to(raw(seed), self.data.shape).astype(np.float64))
        for node in reversed(order):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, p):
        return _pow(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order; robust to deep unrolled graphs."""
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


def _accumulate(node: Tensor, g: Arr) -> None:
    # Never += onto a possibly shared buffer.
    node.grad = g if node.grad is None else node.grad + g


def _is_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


# -- elementwise binary ops --------------------------------------------------


def _add(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.add(raw(a), raw(b))
    da, db = raw(a), raw(b)
    out = Tensor(da + db, parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(g, db.shape))

    out._grad_fn = grad_fn
    return out


def _sub(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.subtract(raw(a), raw(b))
    da, db = raw(a), raw(b)
    out = Tensor(da - db, parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(-g, db.shape))

    out._grad_fn = grad_fn
    return out


def _mul(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.multiply(raw(a), raw(b))
    da, db = raw(a), raw(b)
    out = Tensor(da * db, parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g * db, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(g * da, db.shape))

    out._grad_fn = grad_fn
    return out


def _div(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.divide(raw(a), raw(b))
    da, db = raw(a), raw(b)
    out = Tensor(da / db, parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g / db, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(-g * da / (db * db), db.shape))

    out._grad_fn = grad_fn
    return out


def _neg(a):
    if not isinstance(a, Tensor):
        return -raw(a)
    out = Tensor(-a.data, parents=(a,))

    def grad_fn(g: Arr) -> None:
        _accumulate(a, -g)

    out._grad_fn = grad_fn
    return out


def _pow(a, p):
    if not isinstance(p, (int, float)):
        raise TypeError("only scalar exponents are supported")
    if not isinstance(a, Tensor):
        return np.power(raw(a), p)
    out = Tensor(np.power(a.data, p), parents=(a,))

    def grad_fn(g: Arr) -> None:
        _accumulate(a, g * p * np.power(a.data, p - 1))

    out._grad_fn = grad_fn
    return out


# -- matmul ------------------------------------------------------------------


def matmul(a, b):
    """Matrix product for the 1-D/2-D operand combinations numpy allows."""
    if not _is_tensor(a, b):
        return np.matmul(raw(a), raw(b))
    da, db = raw(a), raw(b)
    if da.ndim > 2 or db.ndim > 2:
        raise ValueError("matmul supports 1-D and 2-D operands only")
    out = Tensor(np.matmul(da, db), parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            if da.ndim == 2 and db.ndim == 2:
                ga = g @ db.T
            elif da.ndim == 2 and db.ndim == 1:
                ga = np.outer(g, db)
            elif da.ndim == 1 and db.ndim == 2:
                ga = db @ g
            else:  # 1-D dot 1-D
                ga = g * db
            _accumulate(a, ga)
        if isinstance(b, Tensor):
            if da.ndim == 2 and db.ndim == 2:
                gb = da.T @ g
            elif da.ndim == 2 and db.ndim == 1:
                gb = da.T @ g
            elif da.ndim == 1 and db.ndim == 2:
                gb = np.outer(da, g)
            else:
                gb = g * da
            _accumulate(b, gb)

    out._grad_fn = grad_fn
    return out


# -- reductions and shape ops --------------------------------------------------


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy's name
    if not isinstance(x, Tensor):
        return np.sum(raw(x), axis=axis, keepdims=keepdims)
    out_data = np.sum(x.data, axis=axis, keepdims=keepdims)
    out = Tensor(out_data, parents=(x,))
    in_shape = x.data.shape

    def grad_fn(g: Arr) -> None:
        if axis is None:
            expanded = np.broadcast_to(g, in_shape)
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, axes)
            expanded = np.broadcast_to(g, in_shape)
        _accumulate(x, expanded.astype(np.float64))

    out._grad_fn = grad_fn
    return out


def mean(x, axis=None, keepdims: bool = False):
    count = raw(x).size if axis is None else raw(x).shape[axis]
    return sum(x, axis=axis, keepdims=keepdims) / float(count)


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(raw(x), shape)
    out = Tensor(x.data.reshape(shape), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g.reshape(x.data.shape))

    out._grad_fn = grad_fn
    return out


def transpose(x, axes=None):
    if not isinstance(x, Tensor):
        return np.transpose(raw(x), axes)
    out = Tensor(np.transpose(x.data, axes), parents=(x,))
    if axes is None:
        inverse = None
    else:
        inverse = tuple(np.argsort(axes))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, np.transpose(g, inverse))

    out._grad_fn = grad_fn
    return out


def take(x, key):
    """Indexing; gradient scatters back with ``np.add.at`` semantics."""
    if not isinstance(x, Tensor):
        return raw(x)[key]
    out = Tensor(x.data[key], parents=(x,))

    def grad_fn(g: Arr) -> None:
        buf = np.zeros_like(x.data)
        np.add.at(buf, key, g)
        _accumulate(x, buf)

    out._grad_fn = grad_fn
    return out


def embed_rows(sub, index, size: int):
    """Place ``sub``'s rows at ``index`` within an axis-0 size of ``size``.

    Remaining rows are zero.  Inverse of ``take(x, index)`` for disjoint
    indices; used to lift restricted routing outputs back to the full
    output space.
    """
    idx = np.asarray(index, dtype=np.intp)
    ds = raw(sub)
    out_shape = (size,) + ds.shape[1:]
    if not isinstance(sub, Tensor):
        out = np.zeros(out_shape)
        out[idx] = ds
        return out
    data = np.zeros(out_shape)
    data[idx] = ds
    out = Tensor(data, parents=(sub,))

    def grad_fn(g: Arr) -> None:
        _accumulate(sub, g[idx])

    out._grad_fn = grad_fn
    return out


def concatenate(parts: Sequence[TensorLike], axis: int = 0):
    if not _is_tensor(*parts):
        return np.concatenate([raw(p) for p in parts], axis=axis)
    datas = [raw(p) for p in parts]
    out = Tensor(
        np.concatenate(datas, axis=axis),
        parents=tuple(p for p in parts if isinstance(p, Tensor)),
    )
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g: Arr) -> None:
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(part, Tensor):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(part, g[tuple(sl)])

    out._grad_fn = grad_fn
    return out


def stack(parts: Sequence[TensorLike], axis: int = 0):
    if not _is_tensor(*parts):
        return np.stack([raw(p) for p in parts], axis=axis)
    datas = [raw(p) for p in parts]
    out = Tensor(
        np.stack(datas, axis=axis),
        parents=tuple(p for p in parts if isinstance(p, Tensor)),
    )

    def grad_fn(g: Arr) -> None:
        slices = np.moveaxis(g, axis, 0)
        for part, piece in zip(parts, slices):
            if isinstance(part, Tensor):
                _accumulate(part, np.array(piece))

    out._grad_fn = grad_fn
    return out


# -- elementwise nonlinear ops -------------------------------------------------


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(raw(x))
    out = Tensor(np.exp(x.data), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g * out.data)

    out._grad_fn = grad_fn
    return out


def log(x):
    if not isinstance(x, Tensor):
        return np.log(raw(x))
    out = Tensor(np.log(x.data), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g / x.data)

    out._grad_fn = grad_fn
    return out


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(raw(x))
    out = Tensor(np.sqrt(x.data), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g * 0.5 / out.data)

    out._grad_fn = grad_fn
    return out


def sqrt_guarded(x, guard: float = 1e-300):
    """Exact sqrt in the forward value; the gradient's 1/sqrt factor is
    clamped at ``guard`` so a zero input yields a finite (and, chained
    through x = sum of squares, zero) subgradient instead of inf."""
    if not isinstance(x, Tensor):
        return np.sqrt(raw(x))
    out = Tensor(np.sqrt(x.data), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g * 0.5 / np.maximum(out.data, guard))

    out._grad_fn = grad_fn
    return out


def relu(x):
    """max(x, 0); the point x == 0 takes the zero (flat) branch."""
    if not isinstance(x, Tensor):
        return np.maximum(raw(x), 0.0)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), parents=(x,))

    def grad_fn(g: Arr) -> None:
        _accumulate(x, g * mask)

    out._grad_fn = grad_fn
    return out


def maximum(a, b):
    """Elementwise max; ties route the gradient to the first argument."""
    if not _is_tensor(a, b):
        return np.maximum(raw(a), raw(b))
    da, db = raw(a), raw(b)
    mask = da >= db
    out = Tensor(np.where(mask, da, db), parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g * mask, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(g * ~mask, db.shape))

    out._grad_fn = grad_fn
    return out


def where(cond, a, b):
    """Select ``a`` where ``cond`` else ``b``; ``cond`` is a plain boolean
    array and is treated as non-differentiable control flow."""
    cond = np.asarray(raw(cond), dtype=bool) if isinstance(cond, Tensor) else np.asarray(cond, dtype=bool)
    if not _is_tensor(a, b):
        return np.where(cond, raw(a), raw(b))
    da, db = raw(a), raw(b)
    out = Tensor(np.where(cond, da, db), parents=tuple(x for x in (a, b) if isinstance(x, Tensor)))

    def grad_fn(g: Arr) -> None:
        if isinstance(a, Tensor):
            _accumulate(a, _unbroadcast(g * cond, da.shape))
        if isinstance(b, Tensor):
            _accumulate(b, _unbroadcast(g * ~cond, db.shape))

    out._grad_fn = grad_fn
    return out


def add_n(parts: Iterable[TensorLike]):
    """Sum a sequence of same-shaped values (loss accumulation helper)."""
    total = None
    for p in parts:
        total = p if total is None else total + p
    if total is None:
        raise ValueError("add_n needs at least one term")
    return total
