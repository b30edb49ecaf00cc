"""Fused multiply-add ufuncs (single rounding) for float32 and float64.

numpy has no fma; these wrap the C library's fma/fmaf in numba-compiled
ufuncs so the interpreter rounds exactly like the fmla instruction.
"""

from __future__ import annotations

import ctypes
import ctypes.util
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _ufuncs():
    import numba

    libm = ctypes.CDLL(ctypes.util.find_library("m"))
    f64 = libm.fma
    f64.restype, f64.argtypes = ctypes.c_double, [ctypes.c_double] * 3
    f32 = libm.fmaf
    f32.restype, f32.argtypes = ctypes.c_float, [ctypes.c_float] * 3

    @numba.vectorize(["float64(float64, float64, float64)"])
    def fma64(a, b, c):
        return f64(a, b, c)

    @numba.vectorize(["float32(float32, float32, float32)"])
    def fma32(a, b, c):
        return f32(a, b, c)

    return {np.dtype(np.float32): fma32, np.dtype(np.float64): fma64}


def fma_for(dtype):
    """The ufunc computing ``a * b + c`` with one rounding in ``dtype``."""
    return _ufuncs()[np.dtype(dtype)]
