"""Order-fixed numeric kernels compiled with numba (``nogil=True``).

Accumulation is sequential and row-major so results are bit-reproducible
against a scalar reference.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(nogil=True, cache=True)
def matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=a.dtype)
    for i in range(n):
        for p in range(k):
            x = a[i, p]
            for j in range(m):
                # out[i, j] accumulates over p = 0..k-1 in order
                out[i, j] += x * b[p, j]
    return out


@numba.njit(nogil=True, cache=True)
def sum_all(flat):
    acc = flat.dtype.type(0)
    for i in range(flat.shape[0]):
        acc += flat[i]
    return acc


@numba.njit(nogil=True, cache=True)
def relu(flat):
    out = np.empty_like(flat)
    zero = flat.dtype.type(0)
    for i in range(flat.shape[0]):
        x = flat[i]
        out[i] = x if x > zero else zero
    return out
