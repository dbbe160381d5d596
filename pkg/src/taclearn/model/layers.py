"""Neural network layer primitives with explicit backward passes.

All math is float64 numpy. Convolution is im2col + one GEMM per layer; the
backward pass scatters column gradients back through the same gather, so the
pair is exactly adjoint and survives finite-difference checks.
"""

from __future__ import annotations

import numpy as np


def _col_slices(kh, kw, stride, out_h, out_w):
    for ki in range(kh):
        for kj in range(kw):
            yield ki, kj, slice(ki, ki + stride * (out_h - 1) + 1, stride), slice(
                kj, kj + stride * (out_w - 1) + 1, stride
            )


def conv_forward(x, w, b, stride=2, pad=1):
    """x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), b: (Cout,)."""
    n, c, h, width = x.shape
    c_out, _, kh, kw = w.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (width + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, out_h, out_w))
    for ki, kj, si, sj in _col_slices(kh, kw, stride, out_h, out_w):
        cols[:, :, ki, kj] = xp[:, :, si, sj]
    cols = cols.reshape(n, c * kh * kw, out_h * out_w)
    out = np.matmul(w.reshape(c_out, -1), cols) + b[:, None]
    cache = (x.shape, cols, w, stride, pad, out_h, out_w)
    return out.reshape(n, c_out, out_h, out_w), cache


def conv_backward(dout, cache):
    x_shape, cols, w, stride, pad, out_h, out_w = cache
    n, c, h, width = x_shape
    c_out, _, kh, kw = w.shape
    dm = dout.reshape(n, c_out, out_h * out_w)
    db = dout.sum(axis=(0, 2, 3))
    dw = np.matmul(dm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    dcols = np.matmul(w.reshape(c_out, -1).T, dm)
    dcols = dcols.reshape(n, c, kh, kw, out_h, out_w)
    dxp = np.zeros((n, c, h + 2 * pad, width + 2 * pad))
    for ki, kj, si, sj in _col_slices(kh, kw, stride, out_h, out_w):
        dxp[:, :, si, sj] += dcols[:, :, ki, kj]
    dx = dxp[:, :, pad : pad + h, pad : pad + width]
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, x):
    return dout * (x > 0)


def gap_forward(x):
    """Global average pool (N, C, H, W) -> (N, C)."""
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout, x_shape):
    n, c, h, w = x_shape
    return np.broadcast_to(dout[:, :, None, None], x_shape) / (h * w)


def linear_forward(emb, w, b):
    """emb: (N, d), w: (d, C), b: (C,) -> logits (N, C)."""
    return emb @ w + b


def linear_backward(dout, emb, w):
    dw = emb.T @ dout
    db = dout.sum(axis=0)
    demb = dout @ w.T
    return demb, dw, db


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; returns (loss, dlogits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def binary_cross_entropy_logits(logits, targets):
    """Mean BCE over all entries; returns (loss, dlogits). Targets in {0,1}."""
    z, y = logits, targets
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per.mean())
    dlogits = (sigmoid(z) - y) / z.size
    return loss, dlogits
