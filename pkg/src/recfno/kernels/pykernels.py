"""Pure-numpy implementations of the hot kernels.

These mirror recfno.kernels._native operation-for-operation (same loop
order, same arithmetic), so the two backends agree to rounding noise.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def fft_stages_inplace(work: np.ndarray, tw: np.ndarray) -> None:
    """Radix-2 DIT butterfly stages, in place.

    `work` is complex128 [n, B] already in bit-reversed row order; `tw` holds
    the n/2 twiddles exp(sign*2i*pi*j/n) whose sign fixes the direction.
    """
    n, b = work.shape
    half = 1
    while half < n:
        stride = (n // 2) // half
        w = tw[: half * stride : stride]
        x = work.reshape(n // (2 * half), 2 * half, b)
        even = x[:, :half]
        t = x[:, half:] * w[None, :, None]
        x[:, half:] = even - t
        x[:, :half] = even + t
        half *= 2


def conv3x3_fwd(x: np.ndarray, wt: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution with one ring of zero padding."""
    h, w, ci = x.shape
    co = wt.shape[3]
    xp = np.zeros((h + 2, w + 2, ci), dtype=x.dtype)
    xp[1:-1, 1:-1] = x
    acc = np.broadcast_to(bias, (h * w, co)).copy()
    for di in range(3):
        for dj in range(3):
            acc += xp[di : di + h, dj : dj + w].reshape(h * w, ci) @ wt[di, dj]
    return acc.reshape(h, w, co)


def conv3x3_grad_x(gy: np.ndarray, wt: np.ndarray) -> np.ndarray:
    h, w, co = gy.shape
    ci = wt.shape[2]
    gp = np.zeros((h + 2, w + 2, co), dtype=gy.dtype)
    gp[1:-1, 1:-1] = gy
    acc = np.zeros((h * w, ci), dtype=gy.dtype)
    for di in range(3):
        for dj in range(3):
            acc += gp[2 - di : 2 - di + h, 2 - dj : 2 - dj + w].reshape(h * w, co) @ wt[di, dj].T
    return acc.reshape(h, w, ci)


def conv3x3_grad_w(x: np.ndarray, gy: np.ndarray):
    h, w, ci = x.shape
    co = gy.shape[2]
    xp = np.zeros((h + 2, w + 2, ci), dtype=x.dtype)
    xp[1:-1, 1:-1] = x
    gflat = gy.reshape(h * w, co)
    gw = np.empty((3, 3, ci, co), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            gw[di, dj] = xp[di : di + h, dj : dj + w].reshape(h * w, ci).T @ gflat
    return gw, gy.sum(axis=(0, 1))


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_fwd(x: np.ndarray):
    """Exact-erf GELU x * Phi(x); returns (value, Phi) so the backward pass
    can skip re-evaluating erf."""
    from scipy.special import erf

    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, cdf


def gelu_bwd(x: np.ndarray, cdf: np.ndarray, g: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return g * (cdf + x * phi)


def voronoi_assign(gx: np.ndarray, gy: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Index of the nearest sensor per cell; ties go to the lowest index."""
    dx = gx[None, :, None] - sx[None, None, :]
    dy = gy[:, None, None] - sy[None, None, :]
    d2 = dx * dx + dy * dy
    return np.argmin(d2, axis=2).astype(np.int64)


def scatter_add(gy: np.ndarray, si: np.ndarray, sj: np.ndarray, h: int, w: int) -> np.ndarray:
    """Accumulate gy[h2,w2,c] into an [h,w,c] buffer at (si[i], sj[j])."""
    gx = np.zeros((h, w, gy.shape[2]), dtype=gy.dtype)
    np.add.at(gx, (si[:, None], sj[None, :]), gy)
    return gx
