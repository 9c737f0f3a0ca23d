"""Primitive differentiable ops on :class:`~cadence.tensor.Tensor`.

Every op works on plain numpy when no tape is active, so the same code
paths serve both training (recorded) and evaluation (pure). Elementwise ops
follow numpy broadcasting; gradients are summed back down to each input's
shape. All ops are deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

from .tensor import Tensor, active_tape, as_tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _emit(data: np.ndarray, inputs: tuple, partial_fns: tuple) -> Tensor:
    """Create the output tensor, recording the op if gradients can flow."""
    tape = active_tape()
    if tape is None:
        return Tensor(data)
    needed = tuple(
        isinstance(i, Tensor) and (i.leaf or i.tape is tape) for i in inputs
    )
    if not any(needed):
        return Tensor(data)
    out = Tensor(data, _tape=tape)

    def backward_fn(g, fns=partial_fns, use=needed):
        return tuple(f(g) if (u and f is not None) else None for f, u in zip(fns, use))

    tape.record(inputs, out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data - b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.shape),
            lambda g: _unbroadcast(g * a.data, b.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data / b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.data, a.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.data, (a,), (lambda g: -g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _emit(out_data, (a,), (lambda g: g * out_data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _emit(np.log(a.data), (a,), (lambda g: g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)
    return _emit(out_data, (a,), (lambda g: g * (0.5 / out_data),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _emit(out_data, (a,), (lambda g: g * (1.0 - out_data * out_data),))


def gelu(a) -> Tensor:
    """Exact Gaussian error linear unit: x * Phi(x).

    The density term of the derivative is only evaluated inside the
    backward closure, so inference-only forwards skip it.
    """
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x / _SQRT2))

    def fn(g):
        return g * (cdf + x * (_INV_SQRT_2PI * np.exp(-0.5 * x * x)))

    return _emit(x * cdf, (a,), (fn,))


def clamp_min(a, lo: float) -> Tensor:
    """Elementwise max(a, lo); gradient is zero where the clamp binds."""
    a = as_tensor(a)
    mask = a.data > lo
    return _emit(np.maximum(a.data, lo), (a,), (lambda g: g * mask,))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)
    return _emit(np.clip(a.data, lo, hi), (a,), (lambda g: g * mask,))


# ---------------------------------------------------------------------------
# linear algebra and shape

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching over leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs ndim >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    return _emit(
        a.data @ b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape),
            lambda g: _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape),
        ),
    )


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    inv = tuple(np.argsort(axes))
    return _emit(
        np.ascontiguousarray(np.transpose(a.data, axes)),
        (a,),
        (lambda g: np.transpose(g, inv),),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    orig = a.shape
    return _emit(a.data.reshape(shape), (a,), (lambda g: g.reshape(orig),))


def concat(parts, axis: int) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_fn(k):
        def fn(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[k], offsets[k + 1])
            return g[tuple(idx)]

        return fn

    return _emit(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        tuple(make_fn(k) for k in range(len(parts))),
    )


def stack(parts, axis: int) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)

    def make_fn(k):
        return lambda g: np.take(g, k, axis=axis)

    return _emit(
        np.stack([p.data for p in parts], axis=axis),
        parts,
        tuple(make_fn(k) for k in range(len(parts))),
    )


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice ``a[..., start:stop, ...]`` along ``axis``."""
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    shape = a.shape

    def fn(g):
        full = np.zeros(shape)
        full[idx] = g
        return full

    return _emit(np.ascontiguousarray(a.data[idx]), (a,), (fn,))


# ---------------------------------------------------------------------------
# reductions

def _expand_like(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    return _emit(
        a.data.sum(axis=axis, keepdims=keepdims),
        (a,),
        (lambda g: _expand_like(g, shape, axis, keepdims).copy(),),
    )


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    count = a.size if axis is None else int(
        np.prod([shape[ax % len(shape)] for ax in ((axis,) if isinstance(axis, int) else axis)])
    )
    return _emit(
        a.data.mean(axis=axis, keepdims=keepdims),
        (a,),
        (lambda g: _expand_like(g, shape, axis, keepdims) / count,),
    )


def sum_sq(a, axis=None, keepdims: bool = False) -> Tensor:
    """Sum of squares, fused so the backward pass is a single multiply."""
    a = as_tensor(a)
    shape = a.shape
    return _emit(
        (a.data * a.data).sum(axis=axis, keepdims=keepdims),
        (a,),
        (lambda g: 2.0 * a.data * _expand_like(g, shape, axis, keepdims),),
    )


# ---------------------------------------------------------------------------
# neural-net composites with fused backward rules

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _emit(y, (a,), (fn,))


def layernorm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    A zero-variance input comes out as pure bias thanks to ``eps``.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def fn_x(g):
        gh = g * gain.data
        return inv * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )

    return _emit(
        xhat * gain.data + bias.data,
        (x, gain, bias),
        (
            fn_x,
            lambda g: _unbroadcast(g * xhat, gain.shape),
            lambda g: _unbroadcast(g, bias.shape),
        ),
    )


def dropout(x, p: float, rng) -> Tensor:
    """Inverted dropout driven by a SplitMix64 stream; identity when p == 0."""
    x = as_tensor(x)
    if p <= 0.0:
        return x
    keep = (rng.uniform(size=x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))
