"""Differentiable operations on :class:`~steprobe.tensor.Tensor`.

A fixed op set covering exactly what the probe heads need. Each op computes
its forward with numpy and, when a tape is active and any input requires
grad, records a closure that pushes the output gradient back to the inputs.
All backward rules are hand-written; finite differences in the test suite are
the independent oracle.

Shape convention: ops act on the trailing axes and tolerate arbitrary leading
batch axes. ``matmul`` multiplies the last two axes with numpy's stacked
semantics; ``softmax``/``layer_norm`` normalize one axis; ``mean_pool``
averages the token axis (``-2``).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, DimensionError, NumericError
from .tensor import Tensor, active_tape


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` — the adjoint of numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(g, b.shape))

    return _record(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bw)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = x.data * np.asarray(c, dtype=x.dtype)

    def bw(g):
        x.accumulate_grad(g * np.asarray(c, dtype=x.dtype))

    return _record(out, (x,), bw)


def tensor_sum(x: Tensor) -> Tensor:
    out = x.data.sum()

    def bw(g):
        x.accumulate_grad(np.broadcast_to(g, x.shape).astype(x.dtype, copy=True))

    return _record(out, (x,), bw)


# ---------------------------------------------------------------------------
# structure


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def bw(g):
        x.accumulate_grad(g.reshape(x.shape))

    return _record(out, (x,), bw)


def swap_axes(x: Tensor, a: int, b: int) -> Tensor:
    out = np.swapaxes(x.data, a, b)

    def bw(g):
        x.accumulate_grad(np.swapaxes(g, a, b))

    return _record(out, (x,), bw)


def transpose_last2(x: Tensor) -> Tensor:
    return swap_axes(x, -1, -2)


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"broadcast_to: cannot expand {x.shape} to {shape}")

    def bw(g):
        x.accumulate_grad(_unbroadcast(g, x.shape))

    return _record(out, (x,), bw)


def concat(parts: list[Tensor], axis: int = -2) -> Tensor:
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def bw(g):
        offset = 0
        for p, s in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(offset, offset + s)
            p.accumulate_grad(g[tuple(idx)])
            offset += s

    return _record(out, tuple(parts), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise DimensionError(f"matmul: batch extents incompatible, {a.shape} @ {b.shape}")

    def bw(g):
        a.accumulate_grad(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        b.accumulate_grad(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _record(out, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b``; 1-D ``x`` is treated as one row."""
    if x.ndim == 1:
        row = reshape(x, (1, x.shape[0]))
        return reshape(add(matmul(row, w), b), (w.shape[-1],))
    return add(matmul(x, w), b)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bw(g):
        x.accumulate_grad(g * (x.data > 0))

    return _record(out, (x,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    x3 = x.data * x.data * x.data
    inner = _GELU_C * (x.data + 0.044715 * x3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def bw(g):
        sech2 = 1.0 - t * t
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x.data * x.data)
        x.accumulate_grad(g * (0.5 * (1.0 + t) + 0.5 * x.data * sech2 * d_inner))

    return _record(out, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``; rejects NaN input."""
    if np.isnan(x.data).any():
        raise NumericError("softmax: NaN in input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        # d/dx softmax: y * (g - sum(g*y))
        dot = (g * out).sum(axis=axis, keepdims=True)
        x.accumulate_grad(out * (g - dot))

    return _record(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: gamma/beta must be ({d},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gamma.accumulate_grad(_unbroadcast(g * xhat, gamma.shape))
        beta.accumulate_grad(_unbroadcast(g, beta.shape))
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        x.accumulate_grad((dxhat - m1 - xhat * m2) * inv)

    return _record(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# pooling, attention, loss


def mean_pool(x: Tensor, axis: int = -2) -> Tensor:
    """Mean over the token axis: ``[..., L, d] -> [..., d]``."""
    if x.ndim < 2:
        raise DimensionError(f"mean_pool needs >=2-D input, got {x.shape}")
    length = x.shape[axis]
    out = x.data.mean(axis=axis)

    def bw(g):
        expanded = np.expand_dims(g, axis) / length
        x.accumulate_grad(np.broadcast_to(expanded, x.shape).astype(x.dtype, copy=True))

    return _record(out, (x,), bw)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         return_weights: bool = False):
    """``softmax(q kᵀ / sqrt(d_h)) v`` over the trailing two axes.

    Composed from the primitive ops, so its gradient comes from their
    backward rules. ``return_weights`` additionally yields the attention
    matrix (as a Tensor) for export.
    """
    if q.shape[-1] != k.shape[-1] or k.shape != v.shape:
        raise DimensionError(
            f"scaled_dot_attention: incompatible shapes q{q.shape} k{k.shape} v{v.shape}")
    dh = q.shape[-1]
    scores = scale(matmul(q, transpose_last2(k)), 1.0 / math.sqrt(dh))
    weights = softmax(scores, axis=-1)
    out = matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood: ``-log softmax(logits)[label]``.

    ``logits`` is ``[C]`` with an int label, or ``[..., C]`` with an int
    array of matching leading shape; the result is always a scalar (mean
    over all labelled rows).
    """
    lab = np.asarray(labels)
    if not np.issubdtype(lab.dtype, np.integer):
        raise ContractError(f"cross_entropy: labels must be integers, got {lab.dtype}")
    num_classes = logits.shape[-1]
    if lab.shape != logits.shape[:-1]:
        raise DimensionError(
            f"cross_entropy: labels shape {lab.shape} does not match logits {logits.shape}")
    if lab.size and (lab.min() < 0 or lab.max() >= num_classes):
        raise IndexError(
            f"cross_entropy: label out of range [0, {num_classes}): "
            f"min={lab.min()}, max={lab.max()}")

    flat = logits.data.reshape(-1, num_classes)
    flat_lab = lab.reshape(-1)
    n = flat.shape[0]
    m = flat.max(axis=-1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.exp(shifted).sum(axis=-1)) + m[:, 0]
    picked = flat[np.arange(n), flat_lab]
    out = np.asarray((lse - picked).mean(), dtype=logits.dtype)

    def bw(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(n), flat_lab] -= 1.0
        logits.accumulate_grad((g * p / n).reshape(logits.shape).astype(logits.dtype))

    return _record(out, (logits,), bw)
