"""Hot-kernel backend selection and shared FFT plumbing.

The compiled extension (recfno.kernels._native) is picked when importable;
otherwise the numpy implementations take over.  RECFNO_BACKEND={auto,native,
python} forces the choice.  Twiddle/bit-reversal tables are built here once
so both backends consume identical constants.
"""

from __future__ import annotations

import os

import numpy as np

from . import pykernels

_choice = os.environ.get("RECFNO_BACKEND", "auto").lower()
if _choice not in ("auto", "native", "python"):
    raise ValueError(f"RECFNO_BACKEND must be auto|native|python, got {_choice!r}")

_impl = None
if _choice in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "native":
            raise
        _impl = None
if _impl is None:
    _impl = pykernels

BACKEND: str = _impl.NAME


def get_impl(name: str | None = None):
    """Return a kernel module by name ('native'/'python'); default: selected one."""
    if name is None or name == BACKEND:
        return _impl
    if name == "python":
        return pykernels
    if name == "native":
        from . import _native  # raises ImportError when not built

        return _native
    raise ValueError(f"unknown backend {name!r}")


conv3x3_fwd = _impl.conv3x3_fwd
conv3x3_grad_x = _impl.conv3x3_grad_x
conv3x3_grad_w = _impl.conv3x3_grad_w
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
voronoi_assign = _impl.voronoi_assign
scatter_add = _impl.scatter_add

_bitrev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[tuple[int, bool], np.ndarray] = {}
_dftmat_cache: dict[tuple[int, bool], np.ndarray] = {}


def bitrev_indices(n: int) -> np.ndarray:
    rev = _bitrev_cache.get(n)
    if rev is None:
        bits = n.bit_length() - 1
        rev = np.zeros(n, dtype=np.intp)
        for i in range(1, n):
            rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
        _bitrev_cache[n] = rev
    return rev


def twiddles(n: int, inverse: bool) -> np.ndarray:
    tw = _twiddle_cache.get((n, inverse))
    if tw is None:
        sign = 1.0 if inverse else -1.0
        tw = np.exp(sign * 2j * np.pi * np.arange(n // 2) / n)
        _twiddle_cache[(n, inverse)] = tw
    return tw


def dft_matrix(n: int, inverse: bool) -> np.ndarray:
    m = _dftmat_cache.get((n, inverse))
    if m is None:
        sign = 1.0 if inverse else -1.0
        k = np.arange(n)
        m = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
        _dftmat_cache[(n, inverse)] = m
    return m


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fft_axis0(a: np.ndarray, inverse: bool, backend=None) -> np.ndarray:
    """Unnormalized DFT along axis 0 of a complex [n, B] array.

    Radix-2 for power-of-two n, naive DFT matrix otherwise.
    """
    impl = _impl if backend is None else backend
    n = a.shape[0]
    if n == 1:
        return a.astype(np.complex128, copy=True)
    if _is_pow2(n):
        work = np.ascontiguousarray(a[bitrev_indices(n)], dtype=np.complex128)
        impl.fft_stages_inplace(work, twiddles(n, inverse))
        return work
    return dft_matrix(n, inverse) @ a


def fft2_raw(x: np.ndarray, inverse: bool = False, backend=None) -> np.ndarray:
    """Unnormalized 2D DFT over the first two axes of [h, w, c]."""
    h, w, c = x.shape
    t = fft_axis0(x.reshape(h, w * c).astype(np.complex128, copy=False), inverse, backend)
    t = np.ascontiguousarray(np.moveaxis(t.reshape(h, w, c), 1, 0)).reshape(w, h * c)
    t = fft_axis0(t, inverse, backend)
    return np.ascontiguousarray(np.moveaxis(t.reshape(w, h, c), 1, 0))
