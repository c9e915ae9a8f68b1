"""Differentiable operations over :class:`~gdplace.numerics.tensor.Tensor`.

Broadcasting is deliberately narrow: binary elementwise ops accept either
identical shapes or a scalar operand.  Row-vector broadcasting (biases,
gates, layer-norm gains) goes through the explicit ``add_row``/``mul_row``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from gdplace.errors import DimensionError, DomainError
from gdplace.numerics.tensor import Tensor, as_tensor, tracked


def _out(data, tape, tag, inputs, vjp) -> Tensor:
    out = Tensor(data)
    if tape is not None:
        out.requires_grad = True
        tape.record(tag, inputs, out, vjp)
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0


def _binary_shapes(a: Tensor, b: Tensor, tag: str) -> None:
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"{tag}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    return np.asarray(g.sum()) if _is_scalar(t) and g.ndim else g


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    tape = tracked(a, b)
    return _out(a.data + b.data, tape, "add", (a, b),
                lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    tape = tracked(a, b)
    return _out(a.data - b.data, tape, "sub", (a, b),
                lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    tape = tracked(a, b)
    ad, bd = a.data, b.data
    return _out(ad * bd, tape, "mul", (a, b),
                lambda g: (_unbroadcast(g * bd, a), _unbroadcast(g * ad, b)))


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"minimum: incompatible shapes {a.shape} and {b.shape}")
    tape = tracked(a, b)
    take_a = a.data <= b.data
    return _out(np.where(take_a, a.data, b.data), tape, "minimum", (a, b),
                lambda g: (g * take_a, g * ~take_a))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; gradient passes only strictly inside the range."""
    tape = tracked(x)
    inside = (x.data > lo) & (x.data < hi)
    return _out(np.clip(x.data, lo, hi), tape, "clip", (x,), lambda g: (g * inside,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _out(y, tracked(x), "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _out(y, tracked(x), "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _out(x.data * mask, tracked(x), "relu", (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _out(y, tracked(x), "exp", (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log of non-positive value")
    d = x.data
    return _out(np.log(d), tracked(x), "log", (x,), lambda g: (g / d,))


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add, mul, sigmoid, tanh, relu."""
    table = {"add": add, "mul": mul, "sigmoid": sigmoid, "tanh": tanh, "relu": relu}
    try:
        fn = table[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# -- row broadcasting ---------------------------------------------------------

def _check_row(x: Tensor, v: Tensor, tag: str) -> None:
    if v.ndim != 1 or x.ndim < 1 or x.shape[-1] != v.shape[0]:
        raise DimensionError(f"{tag}: row vector {v.shape} does not fit {x.shape}")


def _sum_leading(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def add_row(x: Tensor, v: Tensor) -> Tensor:
    """``x + v`` with ``v`` broadcast along the last axis."""
    _check_row(x, v, "add_row")
    return _out(x.data + v.data, tracked(x, v), "add_row", (x, v),
                lambda g: (g, _sum_leading(g)))


def mul_row(x: Tensor, v: Tensor) -> Tensor:
    """``x * v`` with ``v`` broadcast along the last axis."""
    _check_row(x, v, "mul_row")
    xd, vd = x.data, v.data
    return _out(xd * vd, tracked(x, v), "mul_row", (x, v),
                lambda g: (g * vd, _sum_leading(g * xd)))


# -- linear algebra -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D product, or batched product over an identical leading batch axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise DimensionError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g)

    return _out(ad @ bd, tracked(a, b), "matmul", (a, b), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add_row(y, b)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _out(np.transpose(x.data, axes), tracked(x), "transpose", (x,),
                lambda g: (np.transpose(g, inv),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    try:
        y = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _out(y, tracked(x), "reshape", (x,), lambda g: (g.reshape(old),))


# -- reductions -----------------------------------------------------------------

def _axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    shape = x.shape
    if axis is None:
        return _out(np.asarray(x.data.sum()), tracked(x), "sum", (x,),
                    lambda g: (np.broadcast_to(g, shape).copy(),))
    ax = _axis(x, axis)
    return _out(x.data.sum(axis=ax), tracked(x), "sum", (x,),
                lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[_axis(x, axis)]
    if n == 0:
        raise DomainError("mean over an empty axis")
    return mul(sum(x, axis), 1.0 / n)


def reduce_max(x: Tensor, axis: int) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal element."""
    ax = _axis(x, axis)
    if x.shape[ax] == 0:
        raise DomainError("reduce_max over an empty axis")
    idx = np.argmax(x.data, axis=ax)
    y = np.take_along_axis(x.data, np.expand_dims(idx, ax), ax).squeeze(ax)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.put_along_axis(full, np.expand_dims(idx, ax), np.expand_dims(g, ax), ax)
        return (full,)

    return _out(y, tracked(x), "reduce_max", (x,), vjp)


def segment_max(values: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Row-wise max of ``values`` grouped by ``segment_ids`` (sorted ascending).

    Empty segments produce zero rows.  Ties route the gradient to the first
    row of the segment holding the maximum, column by column.
    """
    seg = np.asarray(segment_ids, dtype=np.int64)
    vd = values.data
    if vd.ndim != 2 or seg.shape[0] != vd.shape[0]:
        raise DimensionError(f"segment_max: {vd.shape} vs {seg.shape} segment ids")
    if seg.size and np.any(np.diff(seg) < 0):
        raise DimensionError("segment_max: segment ids must be sorted")
    width = vd.shape[1]
    out = np.zeros((num_segments, width))
    if seg.size == 0:
        return _out(out, tracked(values), "segment_max", (values,),
                    lambda g: (np.zeros_like(vd),))
    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    present = seg[starts]
    maxes = np.maximum.reduceat(vd, starts, axis=0)
    out[present] = maxes
    rows = np.arange(seg.size)[:, None]
    is_max = vd == maxes[np.searchsorted(present, seg)]
    cand = np.where(is_max, rows, seg.size)
    first = np.minimum.reduceat(cand, starts, axis=0)

    def vjp(g):
        gv = np.zeros_like(vd)
        cols = np.broadcast_to(np.arange(width), first.shape)
        gv[first, cols] = g[present]
        return (gv,)

    return _out(out, tracked(values), "segment_max", (values,), vjp)


# -- normalisation ----------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _axis(x, axis)
    z = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=ax, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=ax, keepdims=True)),)

    return _out(y, tracked(x), "softmax", (x,), vjp)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _axis(x, axis)
    z = x.data - x.data.max(axis=ax, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=ax, keepdims=True))
    y = z - lse

    def vjp(g):
        return (g - np.exp(y) * g.sum(axis=ax, keepdims=True),)

    return _out(y, tracked(x), "log_softmax", (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    _check_row(x, gain, "layer_norm")
    _check_row(x, bias, "layer_norm")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def vjp(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return (dx, _sum_leading(g * xhat), _sum_leading(g))

    return _out(xhat * gd + bias.data, tracked(x, gain, bias), "layer_norm",
                (x, gain, bias), vjp)


# -- structural -----------------------------------------------------------------

def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise DimensionError("concat of nothing")
    ax = _axis(xs[0], axis)
    try:
        y = np.concatenate([x.data for x in xs], axis=ax)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _out(y, tracked(*xs), "concat", xs, vjp)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    ax = _axis(x, axis)
    index = [slice(None)] * x.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _out(x.data[index], tracked(x), "slice", (x,), vjp)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows ``x[idx]``; repeated indices accumulate in the gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _out(x.data[idx], tracked(x), "take_rows", (x,), vjp)


def permute_rows(x: Tensor, perm: np.ndarray) -> Tensor:
    """``x[perm]`` for a permutation; cheaper backward than :func:`take_rows`."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return _out(x.data[perm], tracked(x), "permute_rows", (x,), lambda g: (g[inv],))


def take_elements(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather ``x[rows, cols]`` from a matrix into a vector."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _out(x.data[rows, cols], tracked(x), "take_elements", (x,), vjp)


def stop_gradient(x: Tensor) -> Tensor:
    """Same values, never tracked: nothing upstream receives gradient through it."""
    return Tensor(x.data)
