"""Forward and reverse passes of the layer vocabulary on ``(B, C, H, W)`` arrays."""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``(C*k*k, B*H*W)`` patch matrix of ``x`` with zero "same" padding."""
    B, C, H, W = x.shape
    if k == 1:
        return x.transpose(1, 0, 2, 3).reshape(C, B * H * W)
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))  # B,C,H,W,k,k
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(C * k * k, B * H * W)


def _col2im(cols: np.ndarray, shape, k: int) -> np.ndarray:
    B, C, H, W = shape
    if k == 1:
        return cols.reshape(C, B, H, W).transpose(1, 0, 2, 3)
    p = k // 2
    cols = cols.reshape(C, k, k, B, H, W)
    out = np.zeros((B, C, H + 2 * p, W + 2 * p), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + H, j : j + W] += cols[:, i, j].transpose(1, 0, 2, 3)
    return out[:, :, p : p + H, p : p + W]


def conv_forward(x, weight, bias, relu: bool):
    """Stride-1 "same" convolution (cross-correlation) plus bias, optional ReLU.

    Returns ``(out, cache)``.
    """
    B, C, H, W = x.shape
    O, Cw, k, _ = weight.shape
    if C != Cw:
        raise ValueError(f"conv expects {Cw} input channels, got {C}")
    cols = _im2col(x, k)
    out = weight.reshape(O, -1) @ cols + bias[:, None]
    out = out.reshape(O, B, H, W).transpose(1, 0, 2, 3)
    if relu:
        out = np.maximum(out, 0)
    return out, (cols, x.shape, out if relu else None)


def conv_backward(dout, weight, cache):
    """Gradients ``(dx, dweight, dbias)`` of ``<dout, conv(x)>``."""
    cols, xshape, act = cache
    if act is not None:
        dout = dout * (act > 0)
    O, _, k, _ = weight.shape
    dmat = dout.transpose(1, 0, 2, 3).reshape(O, -1)
    dweight = (dmat @ cols.T).reshape(weight.shape)
    dbias = dmat.sum(axis=1)
    dx = _col2im(weight.reshape(O, -1).T @ dmat, xshape, k)
    return dx, dweight, dbias


def pool_forward(x):
    """2x2 max-pool; ties go to the first element in row-major order."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"max-pool needs even spatial size, got {H}x{W}")
    blocks = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def pool_backward(dout, cache):
    arg, (B, C, H, W) = cache
    blocks = np.zeros((B, C, H // 2, W // 2, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    return blocks.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)


def upsample_forward(x):
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_backward(dout):
    B, C, H, W = dout.shape
    return dout.reshape(B, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))
