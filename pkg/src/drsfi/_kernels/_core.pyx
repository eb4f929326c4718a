# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled float32 kernels with a pinned left-to-right accumulation order.

Every product is rounded to float32 before it is added to the accumulator
(the extension is compiled with -ffp-contract=off), so results are
bit-identical to the scalar reference loops and to the numpy fallback.
"""

import numpy as np


def gemm_f32(const float[:, ::1] a, const float[:, ::1] b):
    """C[i,j] = sum_l a[i,l]*b[l,j], accumulated over l in increasing order."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    out_arr = np.zeros((m, n), dtype=np.float32)
    cdef float[:, ::1] c = out_arr
    cdef Py_ssize_t i, l, j
    cdef float ail, prod
    with nogil:
        for i in range(m):
            for l in range(k):
                ail = a[i, l]
                for j in range(n):
                    prod = ail * b[l, j]
                    c[i, j] = c[i, j] + prod
    return out_arr


def bag_f32(const float[:, ::1] table, const long long[::1] idx):
    """Sum of table rows idx[0], idx[1], ... accumulated in list order."""
    cdef Py_ssize_t d = table.shape[1]
    cdef Py_ssize_t m = idx.shape[0]
    out_arr = np.zeros(d, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t t, j, r
    with nogil:
        for t in range(m):
            r = idx[t]
            for j in range(d):
                out[j] = out[j] + table[r, j]
    return out_arr


def xor_apply_u32(unsigned int[::1] words, const long long[::1] idx,
                  const unsigned int[::1] masks):
    """In-place words[idx[t]] ^= masks[t]; repeated indices apply in order."""
    cdef Py_ssize_t t
    cdef Py_ssize_t m = idx.shape[0]
    with nogil:
        for t in range(m):
            words[idx[t]] = words[idx[t]] ^ masks[t]
