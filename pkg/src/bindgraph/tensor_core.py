"""Minimal dense tensor engine with reverse-mode differentiation.

Tensors wrap contiguous numpy arrays (float64 by default, float32 allowed
for speed).  Each op records a backward closure over its parents; calling
``backward()`` on a scalar walks the tape once in reverse topological order.
A tape is single-owner during forward/backward; parameter tensors are
immutable during inference and safe to share across threads.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    pass


class ContractError(ValueError):
    pass


def _as_array(x, dtype=None):
    if isinstance(x, Tensor):
        raise TypeError("expected raw array, got Tensor")
    arr = np.asarray(x)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # convenience operators used pervasively by the model code
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def backward(self) -> None:
        """Populate grads of every requires_grad tensor reachable from a
        scalar loss."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, name):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(
            f"{name}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))
    return _make(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))
    return _make(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))
    return _make(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data ** 2), b.data.shape))
    return _make(a.data / b.data, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 1 or b.data.ndim < 1:
        raise DimensionError(
            f"matmul: shapes {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise DimensionError(
            f"matmul: inner dims differ, {a.data.shape} @ {b.data.shape}")

    def bw(g):
        bt = np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else b.data
        at = np.swapaxes(a.data, -1, -2) if a.data.ndim > 1 else a.data
        if b.data.ndim == 1:
            ga = np.multiply.outer(g, bt) if g.ndim else g * bt
        else:
            ga = np.matmul(g, bt)
        if a.data.ndim == 1:
            gb = np.multiply.outer(at, g) if g.ndim else at * g
        else:
            gb = np.matmul(at, g)
        _accum(a, _unbroadcast(ga.reshape(ga.shape), a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))
    return _make(np.matmul(a.data, b.data), (a, b), bw)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        _accum(x, g * y * (1.0 - y))
    return _make(y, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    y = np.where(pos, x.data, slope * x.data)

    def bw(g):
        _accum(x, g * np.where(pos, 1.0, slope))
    return _make(y, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"softmax: axis {axis} of shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - dot))
    return _make(y, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"log_softmax: axis {axis} of shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        _accum(x, g - np.exp(y) * g.sum(axis=axis, keepdims=True))
    return _make(y, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis then scale/shift."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise DimensionError(
            f"layer_norm: params {gamma.data.shape}/{beta.data.shape} "
            f"vs features ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        _accum(gamma, (g * xhat).reshape(-1, d).sum(axis=0))
        _accum(beta, g.reshape(-1, d).sum(axis=0))
        gx = g * gamma.data
        gxh = gx * inv
        term = (gx * xhat).sum(axis=-1, keepdims=True)
        _accum(x, gxh - (gx.sum(axis=-1, keepdims=True)
                         + xhat * term) * inv / d)
    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), bw)


def dropout(x: Tensor, p: float, seed: int) -> Tensor:
    """Inverted dropout with a counter-based Philox stream keyed by seed.

    p=0 is an exact identity.  Callers derive a distinct seed per op
    instance so results are reproducible across runs and thread counts.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p={p} outside [0, 1)")
    if p == 0.0:
        def bw_id(g):
            _accum(x, g)
        return _make(x.data.copy(), (x,), bw_id)
    rng = np.random.Generator(np.random.Philox(key=seed))
    keep = rng.random(x.data.shape) >= p
    scale = 1.0 / (1.0 - p)
    factor = keep * scale

    def bw(g):
        _accum(x, g * factor)
    return _make(x.data * factor, (x,), bw)


# ---------------------------------------------------------------------------
# reductions / shaping


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape) / n)
    return _make(x.data.mean(axis=axis, keepdims=keepdims), (x,), bw)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape).copy())
    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def max_(x: Tensor, axis: int) -> Tensor:
    """Max along an axis; gradient flows to the (first) argmax entries."""
    arg = x.data.argmax(axis=axis)
    y = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(arg, axis),
                          np.expand_dims(g.reshape(arg.shape), axis), axis=axis)
        _accum(x, gx)
    return _make(np.squeeze(y, axis=axis), (x,), bw)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            _accum(t, g[tuple(sl)])
    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        _accum(x, gx)
    return _make(x.data[sl].copy(), (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        _accum(x, g.reshape(x.data.shape))
    return _make(x.data.reshape(shape), (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(x, g.transpose(inv))
    return _make(x.data.transpose(axes).copy(), (x,), bw)


# ---------------------------------------------------------------------------
# gather / scatter / masking


def gather(x: Tensor, index: np.ndarray, axis: int = 0) -> Tensor:
    """Select rows of x along axis 0 by an integer index array.

    index may have any shape; the result has shape
    index.shape + x.shape[1:].
    """
    if axis != 0:
        raise DimensionError("gather supports axis=0")
    index = np.asarray(index, dtype=np.int64)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index.ravel(),
                  g.reshape(index.size, *x.data.shape[1:]))
        _accum(x, gx)
    return _make(x.data[index], (x,), bw)


def scatter_add(x: Tensor, index: np.ndarray, updates: Tensor) -> Tensor:
    """x with updates added at rows given by index (axis 0)."""
    index = np.asarray(index, dtype=np.int64)
    out = x.data.copy()
    np.add.at(out, index.ravel(),
              updates.data.reshape(index.size, *x.data.shape[1:]))

    def bw(g):
        _accum(x, g)
        _accum(updates, g[index].reshape(updates.data.shape))
    return _make(out, (x, updates), bw)


def masked_fill(x: Tensor, mask: np.ndarray, value: float = -1e9) -> Tensor:
    """Keep x where mask is true, write `value` elsewhere.

    -1e9 stands in for -inf ahead of softmax: the exponential underflows to
    exactly zero without poisoning the row with NaNs.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.data.shape)

    def bw(g):
        _accum(x, g * mask)
    return _make(np.where(mask, x.data, value), (x,), bw)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    return gather(table, ids, axis=0)
