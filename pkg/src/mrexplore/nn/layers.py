"""Batched tensor layers with hand-derived backward passes.

All forwards take a leading batch dimension and return (output, cache); the
matching backward consumes the upstream gradient and the cache. No padding,
no autodiff graph: callers compose backwards in reverse order themselves.
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Incompatible tensor shapes; message carries both offending shapes."""


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def leaky_relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, dout, LEAKY_SLOPE * dout)


def _conv_out_hw(h: int, w: int, kh: int, kw: int, stride: int) -> tuple[int, int]:
    oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
    if oh < 1 or ow < 1 or (h - kh) % stride or (w - kw) % stride:
        raise ShapeError(f"conv input {h}x{w} incompatible with kernel "
                         f"{kh}x{kw} stride {stride}")
    return oh, ow


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh, ow = _conv_out_hw(h, w, kh, kw, stride)
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(dcols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh, ow = _conv_out_hw(h, w, kh, kw, stride)
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
    return dx


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Valid cross-correlation. x: (N, Cin, H, W), w: (Cout, Cin, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d input {x.shape} vs kernel {w.shape}")
    cout, _, kh, kw = w.shape
    oh, ow = _conv_out_hw(x.shape[2], x.shape[3], kh, kw, stride)
    cols = _im2col(x, kh, kw, stride)
    w_flat = w.reshape(cout, -1)
    out = np.matmul(w_flat, cols) + b[None, :, None]
    out = out.reshape(x.shape[0], cout, oh, ow)
    cache = (cols, w, x.shape, stride)
    return out, cache


def conv2d_backward(dout: np.ndarray, cache):
    cols, w, x_shape, stride = cache
    cout, _, kh, kw = w.shape
    n = x_shape[0]
    dflat = dout.reshape(n, cout, -1)
    dw = np.einsum("nop,nkp->ok", dflat, cols).reshape(w.shape)
    db = dflat.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(cout, -1).T, dflat)
    dx = _col2im(dcols, x_shape, kh, kw, stride)
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map. x: (N, Din), w: (Dout, Din)."""
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense input {x.shape} vs weight {w.shape}")
    return x @ w.T + b, (x, w)


def dense_backward(dout: np.ndarray, cache):
    x, w = cache
    dx = dout @ w
    dw = dout.T @ x
    db = dout.sum(axis=0)
    return dx, dw, db


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(x: np.ndarray, h: np.ndarray, c: np.ndarray,
                      wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """Standard LSTM cell, gate order (input, forget, candidate, output).

    x: (N, Din), h/c: (N, H), wx: (4H, Din), wh: (4H, H), b: (4H,).
    """
    if x.shape[1] != wx.shape[1] or h.shape[1] != wh.shape[1]:
        raise ShapeError(f"lstm input {x.shape}/{h.shape} vs weights "
                         f"{wx.shape}/{wh.shape}")
    hidden = wh.shape[1]
    z = x @ wx.T + h @ wh.T + b
    zi, zf, zg, zo = (z[:, k * hidden:(k + 1) * hidden] for k in range(4))
    gi, gf, go = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
    gg = np.tanh(zg)
    c2 = gf * c + gi * gg
    tc2 = np.tanh(c2)
    h2 = go * tc2
    cache = (x, h, c, wx, wh, gi, gf, gg, go, tc2)
    return h2, c2, cache


def lstm_cell_backward(dh2: np.ndarray, dc2: np.ndarray, cache):
    x, h, c, wx, wh, gi, gf, gg, go, tc2 = cache
    dgo = dh2 * tc2
    dc_total = dc2 + dh2 * go * (1.0 - tc2 * tc2)
    dgf = dc_total * c
    dc_prev = dc_total * gf
    dgi = dc_total * gg
    dgg = dc_total * gi
    dzi = dgi * gi * (1.0 - gi)
    dzf = dgf * gf * (1.0 - gf)
    dzg = dgg * (1.0 - gg * gg)
    dzo = dgo * go * (1.0 - go)
    dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)
    dx = dz @ wx
    dh_prev = dz @ wh
    dwx = dz.T @ x
    dwh = dz.T @ h
    db = dz.sum(axis=0)
    return dx, dh_prev, dc_prev, dwx, dwh, db
