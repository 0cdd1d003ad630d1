"""Small-net building blocks with explicit backward passes.

All convolutions are 3x3 with configurable stride and padding 1, applied
to (N, C, H, W) batches. Gradients are exact; no autodiff anywhere.
"""
from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def swish(z: np.ndarray) -> np.ndarray:
    return z * sigmoid(z)


def swish_grad(z: np.ndarray) -> np.ndarray:
    s = sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def conv_out_size(size: int, stride: int, pad: int = 1, kernel: int = 3) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int = 1):
    """Returns (y, xp); xp is the padded input cached for the backward pass."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = conv_out_size(h, stride, pad, kh)
    wo = conv_out_size(wd, stride, pad, kw)
    y = np.broadcast_to(b[None, :, None, None], (n, o, ho, wo)).copy()
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride]
            y += np.einsum("ncij,oc->noij", xs, w[:, :, u, v], optimize=True)
    return y, xp


def conv2d_backward(dy: np.ndarray, xp: np.ndarray, w: np.ndarray, stride: int, pad: int = 1):
    """Gradients for conv2d_forward. Returns (dx, dw, db)."""
    n, o, ho, wo = dy.shape
    _, c, kh, kw = w.shape
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride]
            dw[:, :, u, v] = np.einsum("noij,ncij->oc", dy, xs, optimize=True)
            dxp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += np.einsum(
                "noij,oc->ncij", dy, w[:, :, u, v], optimize=True
            )
    db = dy.sum(axis=(0, 2, 3))
    h = xp.shape[2] - 2 * pad
    wd = xp.shape[3] - 2 * pad
    dx = dxp[:, :, pad:pad + h, pad:pad + wd]
    return dx, dw, db
