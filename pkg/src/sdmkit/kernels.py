"""Convolution kernels with two interchangeable backends.

The micro encoders spend nearly all of their time in 2-D convolution
forward/backward passes, so those carry numba @njit implementations with
a pure-numpy (im2col) fallback. Set SDMKIT_DISABLE_NUMBA=1 to force the
numpy path; both backends produce results equal to float64 round-off.
benchmarks/bench_kernels.py times the two side by side.

All arrays are float64; x is (N, C, H, W), w is (F, C, KH, KW), stride is
a positive int, no padding.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("SDMKIT_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def conv2d_out_shape(h: int, w: int, kh: int, kw: int, stride: int) -> tuple[int, int]:
    return (h - kh) // stride + 1, (w - kw) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*KH*KW, OH*OW) patch matrix via stride tricks."""
    n, c, h, w = x.shape
    oh, ow = conv2d_out_shape(h, w, kh, kw, stride)
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    return windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)


def _conv2d_forward_numpy(x, w, b, stride):
    n, c, h, wid = x.shape
    f, _, kh, kw = w.shape
    oh, ow = conv2d_out_shape(h, wid, kh, kw, stride)
    cols = _im2col(x, kh, kw, stride)
    out = np.einsum("fk,nkl->nfl", w.reshape(f, -1), cols, optimize=True)
    out += b[None, :, None]
    return out.reshape(n, f, oh, ow)


def _conv2d_backward_numpy(x, w, dout, stride):
    n, c, h, wid = x.shape
    f, _, kh, kw = w.shape
    oh, ow = dout.shape[2], dout.shape[3]
    cols = _im2col(x, kh, kw, stride)
    dflat = dout.reshape(n, f, oh * ow)
    dw = np.einsum("nfl,nkl->fk", dflat, cols, optimize=True).reshape(w.shape)
    db = dflat.sum(axis=(0, 2))
    # input gradient via col2im scatter
    dcols = np.einsum("fk,nfl->nkl", w.reshape(f, -1), dflat, optimize=True)
    dx = np.zeros_like(x)
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += dcols[
                :, :, i, j
            ]
    return dx, dw, db


if HAS_NUMBA:

    @njit(cache=True)
    def _conv2d_forward_njit(x, w, b, stride):  # pragma: no cover - compiled
        n, c, h, wid = x.shape
        f, _, kh, kw = w.shape
        oh = (h - kh) // stride + 1
        ow = (wid - kw) // stride + 1
        out = np.empty((n, f, oh, ow), dtype=np.float64)
        for ni in range(n):
            for fi in range(f):
                for oi in range(oh):
                    for oj in range(ow):
                        acc = b[fi]
                        for ci in range(c):
                            for ki in range(kh):
                                for kj in range(kw):
                                    acc += (
                                        w[fi, ci, ki, kj]
                                        * x[ni, ci, oi * stride + ki, oj * stride + kj]
                                    )
                        out[ni, fi, oi, oj] = acc
        return out

    @njit(cache=True)
    def _conv2d_backward_njit(x, w, dout, stride):  # pragma: no cover - compiled
        n, c, h, wid = x.shape
        f, _, kh, kw = w.shape
        oh = dout.shape[2]
        ow = dout.shape[3]
        dx = np.zeros_like(x)
        dw = np.zeros_like(w)
        db = np.zeros(f, dtype=np.float64)
        for ni in range(n):
            for fi in range(f):
                for oi in range(oh):
                    for oj in range(ow):
                        g = dout[ni, fi, oi, oj]
                        db[fi] += g
                        for ci in range(c):
                            for ki in range(kh):
                                for kj in range(kw):
                                    dw[fi, ci, ki, kj] += (
                                        g * x[ni, ci, oi * stride + ki, oj * stride + kj]
                                    )
                                    dx[ni, ci, oi * stride + ki, oj * stride + kj] += (
                                        g * w[fi, ci, ki, kj]
                                    )
        return dx, dw, db

    def conv2d_forward(x, w, b, stride=1):
        return _conv2d_forward_njit(
            np.ascontiguousarray(x), np.ascontiguousarray(w), np.ascontiguousarray(b), stride
        )

    def conv2d_backward(x, w, dout, stride=1):
        return _conv2d_backward_njit(
            np.ascontiguousarray(x),
            np.ascontiguousarray(w),
            np.ascontiguousarray(dout),
            stride,
        )

else:
    conv2d_forward = _conv2d_forward_numpy
    conv2d_backward = _conv2d_backward_numpy


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"


# exposed for cross-backend tests and benchmarks
conv2d_forward_numpy = _conv2d_forward_numpy
conv2d_backward_numpy = _conv2d_backward_numpy
