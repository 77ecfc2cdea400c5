# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport log, INFINITY

cnp.import_array()


def weighted_moments(w_vec, w_mat, B, H):
    cdef const double[::1] wv = np.ascontiguousarray(w_vec, dtype=np.float64)
    cdef const double[::1] wm = np.ascontiguousarray(w_mat, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] h = np.ascontiguousarray(H, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], qb = b.shape[1], qh = h.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double bij, wmi
    s_arr = np.zeros(qb)
    M_arr = np.zeros((qb, qh))
    cdef double[::1] s = s_arr
    cdef double[:, ::1] M = M_arr
    for i in range(n):
        wmi = wm[i]
        for j in range(qb):
            bij = b[i, j]
            s[j] += wv[i] * bij
            bij = bij * wmi
            for k in range(qh):
                M[j, k] += bij * h[i, k]
    return s_arr, M_arr


def el_dual_terms(u, lam):
    cdef const double[:, ::1] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] L = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t n = U.shape[0], m = U.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double d, inv, obj = 0.0, min_denom = INFINITY
    grad_arr = np.zeros(m)
    hess_arr = np.zeros((m, m))
    cdef double[::1] g = grad_arr
    cdef double[:, ::1] Hs = hess_arr
    cdef double r[64]
    if m > 64:
        from elvol._pykernels import el_dual_terms as fallback
        return fallback(u, lam)
    if n == 0:
        return 0.0, grad_arr, hess_arr, 1.0
    for i in range(n):
        d = 1.0
        for j in range(m):
            d += L[j] * U[i, j]
        if d < min_denom:
            min_denom = d
    if min_denom <= 0.0:
        return INFINITY, grad_arr, hess_arr, min_denom
    for i in range(n):
        d = 1.0
        for j in range(m):
            d += L[j] * U[i, j]
        obj -= log(d)
        inv = 1.0 / d
        for j in range(m):
            r[j] = U[i, j] * inv
            g[j] -= r[j]
        for j in range(m):
            for k in range(j, m):
                Hs[j, k] += r[j] * r[k]
    for j in range(m):
        for k in range(j):
            Hs[j, k] = Hs[k, j]
    return obj, grad_arr, hess_arr, min_denom
