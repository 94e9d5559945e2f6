"""Batched layer primitives with explicit backward passes.

Activations are laid out (N, C, H, W). Convolutions go through im2col and
a single (N*H*W, C*9) GEMM. Max-pool ties route the backward gradient to
the first maximum in row-major window order, which keeps training
deterministic. Arithmetic dtype follows the inputs: float64 for gradient
checks and inference, float32 for the training fast path.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 convolution, stride 1, same padding.

    x: (N, C, H, W); w: (O, C, 3, 3); b: (O,). Returns (y, cache).
    """
    n, c, h, wid = x.shape
    o = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))          # (N, C, H, W, 3, 3)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * wid, c * 9)
    wm = w.reshape(o, c * 9)
    y = cols @ wm.T + b
    y = y.reshape(n, h * wid, o).transpose(0, 2, 1).reshape(n, o, h, wid)
    return y, (cols, wm, x.shape)


def conv3x3_backward(dy: np.ndarray, cache):
    """Returns (dx, dw, db) for conv3x3_forward."""
    cols, wm, x_shape = cache
    n, c, h, wid = x_shape
    o = wm.shape[0]
    dflat = np.ascontiguousarray(dy.reshape(n, o, h * wid).transpose(0, 2, 1)).reshape(
        n * h * wid, o
    )
    dwm = dflat.T @ cols                                        # (O, C*9)
    db = dflat.sum(axis=0)
    dcols = dflat @ wm                                          # (N*HW, C*9)
    dwin = dcols.reshape(n, h, wid, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wid + 2), dtype=dy.dtype)
    for ky in range(3):
        for kx in range(3):
            dxp[:, :, ky:ky + h, kx:kx + wid] += dwin[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    dx = dxp[:, :, 1:-1, 1:-1]
    return dx, dwm.reshape(o, c, 3, 3), db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x > 0.0


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max-pool, stride 2; window order is row-major for tie-breaking."""
    n, c, h, w = x.shape
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = win.argmax(axis=-1)                                   # first max wins ties
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy: np.ndarray, cache) -> np.ndarray:
    idx, x_shape = cache
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    return (
        dwin.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (N, D); w: (D, U); b: (U,)."""
    return x @ w + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_from_logits(z: np.ndarray, y: np.ndarray):
    """Per-item binary cross-entropy and d(loss_i)/dz_i, numerically stable.

    z: (N,) logits; y: (N,) 0/1 targets. loss_i = softplus(z) - y*z.
    """
    losses = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z
    dz = sigmoid(z) - y
    return losses, dz
