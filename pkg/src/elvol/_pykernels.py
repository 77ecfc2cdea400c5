"""numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` must agree with them to
rounding error.
"""
import numpy as np


def weighted_moments(w_vec, w_mat, B, H):
    """Return ``sum_i w_vec[i] B[i]`` and ``sum_i w_mat[i] B[i] H[i]'``."""
    B = np.asarray(B, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    s = B.T @ np.asarray(w_vec, dtype=np.float64)
    M = B.T @ (np.asarray(w_mat, dtype=np.float64)[:, None] * H)
    return s, M


def el_dual_terms(u, lam):
    """Objective, gradient and Hessian of ``-sum_i log(1 + lam'u_i)``.

    Returns ``(obj, grad, hess, min_denom)``. When some denominator is not
    positive the objective is ``inf`` and grad/hess are not meaningful.
    """
    u = np.asarray(u, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    d = 1.0 + u @ lam
    min_denom = float(d.min()) if d.size else 1.0
    m = u.shape[1]
    if min_denom <= 0.0:
        return np.inf, np.zeros(m), np.zeros((m, m)), min_denom
    obj = -float(np.sum(np.log(d)))
    r = u / d[:, None]
    grad = -r.sum(axis=0)
    hess = r.T @ r
    return obj, grad, hess, min_denom
