"""Differentiable building blocks used by the model equations."""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    _make,
    as_tensor,
    concat,
    matmul,
    sigmoid,
    sqrt,
    stop_gradient,
    tanh,
)


def softmax(x, axis=-1, mask=None):
    """Max-shifted softmax along ``axis``.

    Entries where ``mask`` is False get probability zero.  A slice that is
    masked out entirely comes back as all zeros rather than NaN.
    """
    x = as_tensor(x)
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        shifted = np.where(mask, xd, -np.inf)
        top = np.max(shifted, axis=axis, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.where(mask, np.exp(np.where(mask, xd, 0.0) - top), 0.0)
    else:
        top = np.max(xd, axis=axis, keepdims=True)
        e = np.exp(xd - top)
    total = e.sum(axis=axis, keepdims=True)
    out = e / np.where(total == 0, 1.0, total)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def linear(x, weight, bias=None):
    """``x @ weight (+ bias)`` with ``weight`` shaped (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else out + bias


def lstm_step(x, h, c, params):
    """One step of a gated recurrent cell.

    ``params`` holds ``W`` (input, 4H), ``U`` (H, 4H) and ``b`` (4H,), gate
    blocks ordered input, forget, candidate, output.  Returns ``(h', c')``.
    """
    W, U, b = params["W"], params["U"], params["b"]
    hidden = U.shape[0]
    if x.shape[-1] != W.shape[0] or h.shape[-1] != hidden or c.shape[-1] != hidden:
        raise ValueError(
            f"lstm_step dimension mismatch: x {x.shape}, h {h.shape}, c {c.shape}, "
            f"W {W.shape}, U {U.shape}")
    gates = matmul(x, W) + matmul(h, U) + b
    i = sigmoid(gates[..., :hidden])
    f = sigmoid(gates[..., hidden:2 * hidden])
    g = tanh(gates[..., 2 * hidden:3 * hidden])
    o = sigmoid(gates[..., 3 * hidden:])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def dropout(x, ratio, rng, training=True):
    """Inverted dropout: kept entries are rescaled so inference is the identity."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"dropout ratio must be in [0, 1), got {ratio}")
    if not training or ratio == 0.0:
        return x
    keep = (rng.random(x.shape) >= ratio).astype(x.dtype) / (1.0 - ratio)
    return x * keep


def straight_through(hard, soft):
    """Forward value of ``hard``; gradients go to ``soft`` through an identity Jacobian."""
    soft = as_tensor(soft)
    hard_data = hard.data if isinstance(hard, Tensor) else np.asarray(hard, dtype=soft.dtype)
    if hard_data.shape != soft.shape:
        raise ValueError(f"straight_through shape mismatch: {hard_data.shape} vs {soft.shape}")
    return soft + stop_gradient(Tensor(hard_data) - soft)


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(var + eps) * gain + bias


def one_hot(index, size, dtype=np.float64):
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (size,), dtype=dtype)
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def cat(*tensors):
    return concat(list(tensors), axis=-1)
