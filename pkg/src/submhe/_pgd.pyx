# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled projected-gradient kernel for box-constrained quadratics.

Iterates v <- clip(v - alpha * (S v + g), lo, hi) a fixed number of times.
Semantically identical to submhe._pgd_fallback.run_pgd (up to floating-point
summation order).
"""

import numpy as np


def run_pgd(s, g, lo, hi, v0, double alpha, long iters):
    cdef const double[:, ::1] sm = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] gm = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] lom = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] him = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t n = gm.shape[0]
    v = np.array(v0, dtype=np.float64)
    grad = np.empty(n, dtype=np.float64)
    cdef double[::1] vm = v
    cdef double[::1] gradm = grad
    cdef Py_ssize_t it, i, j
    cdef double acc, x
    for it in range(iters):
        for i in range(n):
            acc = gm[i]
            for j in range(n):
                acc += sm[i, j] * vm[j]
            gradm[i] = acc
        for i in range(n):
            x = vm[i] - alpha * gradm[i]
            if x < lom[i]:
                x = lom[i]
            elif x > him[i]:
                x = him[i]
            vm[i] = x
    return v
