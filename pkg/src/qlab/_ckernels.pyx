# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``qlab._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def pivot(double[:, ::1] T, Py_ssize_t r, Py_ssize_t c):
    cdef Py_ssize_t nrow = T.shape[0], ncol = T.shape[1]
    cdef Py_ssize_t i, j, k, ncols_nz = 0
    cdef double piv = T[r, c], f
    cdef cnp.intp_t[::1] cols = np.empty(ncol, dtype=np.intp)
    for j in range(ncol):
        if T[r, j] != 0.0:
            T[r, j] = T[r, j] / piv
            cols[ncols_nz] = j
            ncols_nz += 1
    for i in range(nrow):
        if i == r:
            continue
        f = T[i, c]
        if f == 0.0:
            continue
        for k in range(ncols_nz):
            j = cols[k]
            T[i, j] = T[i, j] - f * T[r, j]
        T[i, c] = 0.0
    T[r, c] = 1.0


def ratio_test(double[:, ::1] T, Py_ssize_t c, cnp.intp_t[::1] basis, double tol):
    cdef Py_ssize_t m = basis.shape[0], last = T.shape[1] - 1
    cdef Py_ssize_t i, row = -1
    cdef double best = INFINITY, ratio, a
    # first pass: minimum ratio
    for i in range(m):
        a = T[i, c]
        if a > tol:
            ratio = T[i, last] / a
            if ratio < best:
                best = ratio
    if best == INFINITY:
        return -1, INFINITY
    cdef double cutoff = best + 1e-12 * (1.0 + fabs(best))
    for i in range(m):
        a = T[i, c]
        if a > tol and T[i, last] / a <= cutoff:
            if row < 0 or basis[i] < basis[row]:
                row = i
    ratio = T[row, last] / T[row, c]
    return row, (ratio if ratio > 0.0 else 0.0)


def pinball_terms(const double[:, ::1] R, const double[::1] taus):
    cdef Py_ssize_t n = R.shape[0], q = R.shape[1], i, j
    psi_arr = np.empty((n, q))
    cdef double[:, ::1] psi = psi_arr
    cdef double total = 0.0, u, s
    for i in range(n):
        for j in range(q):
            u = R[i, j]
            s = taus[j] - 1.0 if u < 0.0 else taus[j]
            psi[i, j] = s
            total += u * s
    return total, psi_arr


def pav(const double[::1] y, const double[::1] w):
    cdef Py_ssize_t n = y.shape[0], i, k = -1, s, pos = 0
    level_arr = np.empty(n)
    weight_arr = np.empty(n)
    size_arr = np.empty(n, dtype=np.intp)
    cdef double[::1] level = level_arr, weight = weight_arr
    cdef cnp.intp_t[::1] size = size_arr
    cdef double tw
    for i in range(n):
        k += 1
        level[k] = y[i]
        weight[k] = w[i]
        size[k] = 1
        while k > 0 and level[k - 1] > level[k]:
            tw = weight[k - 1] + weight[k]
            level[k - 1] = (weight[k - 1] * level[k - 1] + weight[k] * level[k]) / tw
            weight[k - 1] = tw
            size[k - 1] += size[k]
            k -= 1
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for i in range(k + 1):
        for s in range(size[i]):
            out[pos] = level[i]
            pos += 1
    return out_arr
