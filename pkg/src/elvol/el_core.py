"""Empirical-likelihood weights by Newton's method on the convex dual.

Maximizing ``sum_i log p_i`` subject to ``sum p_i = 1`` and
``sum_i p_i u_i = 0`` (``u_i = g_i - target``) gives
``p_i = 1 / (n (1 + lam'u_i))`` where ``lam`` minimizes
``-sum_i log(1 + lam'u_i)``. Steps are halved until every
``1 + lam'u_i >= 1/n`` and the dual objective does not increase.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import qr

from elvol import kernels
from elvol.errors import InfeasibleConstraintsError, NonConvergenceError
from elvol.population import PopulationFrame


@dataclass(frozen=True)
class ConstraintSet:
    g: np.ndarray
    targets: np.ndarray
    labels: tuple

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        if g.ndim == 1:
            g = g[:, None]
        t = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if g.shape[1] != t.size or len(self.labels) != t.size:
            raise ValueError("g, targets and labels disagree on the number of constraints")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(t))):
            raise ValueError("constraint values must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def u(self) -> np.ndarray:
        return self.g - self.targets

    @property
    def m(self) -> int:
        return self.targets.size

    def __add__(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(np.hstack([self.g, other.g]),
                             np.r_[self.targets, other.targets],
                             self.labels + other.labels)


def no_constraints(n: int) -> ConstraintSet:
    return ConstraintSet(np.zeros((n, 0)), np.zeros(0), ())


@dataclass
class ElSolution:
    p: np.ndarray
    lam: np.ndarray
    iterations: int
    converged: bool
    constraint_residual: np.ndarray
    labels: tuple = ()
    dropped: tuple = ()
    objective_trace: list = field(default_factory=list)

    def population_weights(self, n_units: int) -> np.ndarray:
        """Weights on the population scale, summing to N."""
        return n_units * self.p


@dataclass(frozen=True)
class ElOptions:
    tol: float = 1e-10
    max_iter: int = 100
    max_halvings: int = 60
    rank_tol: float = 1e-10


def independent_columns(cs: ConstraintSet, rank_tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the columns of u.

    A column whose centered values are negligible next to the raw values is
    treated as zero. The rest are scaled to unit norm and chosen by pivoted
    QR; a pivot is kept while ``|R_kk| > rank_tol``.
    """
    u = cs.u
    if cs.m == 0:
        return np.zeros(0, dtype=int)
    n = u.shape[0]
    norms = np.linalg.norm(u, axis=0)
    scale = np.sqrt(n) * np.maximum(np.abs(cs.g).max(axis=0), np.abs(cs.targets))
    live = np.flatnonzero(norms > rank_tol * scale)
    if live.size == 0:
        return live
    _, R, piv = qr(u[:, live] / norms[live], mode="economic", pivoting=True)
    rank = int(np.sum(np.abs(np.diag(R)) > rank_tol))
    return np.sort(live[piv[:rank]])


def el_solve(constraints: ConstraintSet, options: ElOptions = ElOptions()) -> ElSolution:
    """Solve the EL weighting problem for the given constraints.

    Redundant (zero or collinear) constraint columns are dropped first and
    reported in ``ElSolution.dropped``; their multipliers are zero.
    """
    u_full = constraints.u
    n = u_full.shape[0]
    if n == 0:
        raise ValueError("no sample units")
    keep = independent_columns(constraints, options.rank_tol)
    dropped = tuple(constraints.labels[j] for j in range(constraints.m) if j not in set(keep))
    u = np.ascontiguousarray(u_full[:, keep])
    m = u.shape[1]

    for j in range(m):
        lo, hi = u[:, j].min(), u[:, j].max()
        if not (lo < 0.0 < hi):
            raise InfeasibleConstraintsError(
                f"target for {constraints.labels[keep[j]]!r} is outside the range of sample values",
                constraints.labels[keep[j]])

    def residual(lam, grad):
        # sum p_i u_i with p normalized; equals -grad / n only at the optimum,
        # and stays honest when lam runs off towards an infeasible target
        return np.max(np.abs(grad)) / np.sum(1.0 / (1.0 + u @ lam))

    lam = np.zeros(m)
    obj, grad, hess, _ = kernels.el_dual_terms(u, lam)
    trace = [obj]
    it = 0
    floor = 1.0 / n
    while m and residual(lam, grad) > options.tol:
        if it >= options.max_iter:
            raise NonConvergenceError(f"el_solve did not converge in {options.max_iter} iterations")
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _ in range(options.max_halvings):
            trial = lam + t * step
            obj_t, grad_t, hess_t, min_d = kernels.el_dual_terms(u, trial)
            if min_d >= floor and (obj_t <= obj or (
                    obj_t - obj <= 1e-12 * max(1.0, abs(obj))
                    and np.max(np.abs(grad_t)) < np.max(np.abs(grad)))):
                # second branch: objective is flat to rounding near the optimum
                break
            t *= 0.5
        else:
            worst = keep[int(np.argmax(np.abs(grad)))]
            raise InfeasibleConstraintsError(
                f"EL dual line search collapsed; targets appear infeasible "
                f"(largest violation in {constraints.labels[worst]!r})",
                constraints.labels[worst])
        if not np.all(np.isfinite(trial)) or np.linalg.norm(trial) > 1e12:
            worst = keep[int(np.argmax(np.abs(grad)))]
            raise InfeasibleConstraintsError("EL dual is unbounded; targets infeasible",
                                             constraints.labels[worst])
        lam, obj, grad, hess = trial, obj_t, grad_t, hess_t
        trace.append(obj)
        it += 1

    d = 1.0 + u @ lam
    p = 1.0 / (n * d)
    p = p / p.sum()
    if m and np.max(np.abs(u.T @ p)) > 1e3 * options.tol:
        raise InfeasibleConstraintsError("EL weights do not meet the constraints; targets infeasible")
    lam_full = np.zeros(constraints.m)
    lam_full[keep] = lam
    return ElSolution(p=p, lam=lam_full, iterations=it, converged=True,
                      constraint_residual=u_full.T @ p, labels=constraints.labels,
                      dropped=dropped, objective_trace=trace)


def build_bias_calibration(pi_sample, w_target: float,
                           label: str = "bias_calibration") -> ConstraintSet:
    """sum_S p_i pi_i = w_target."""
    pi_sample = np.asarray(pi_sample, dtype=np.float64)
    if np.any((pi_sample <= 0) | (pi_sample >= 1)):
        raise ValueError("propensity values must lie in (0, 1)")
    if not 0.0 < w_target < 1.0:
        raise ValueError("w_target must lie in (0, 1)")
    return ConstraintSet(pi_sample[:, None], [w_target], (label,))


def build_benchmarking(frame: PopulationFrame, columns: Sequence[int] = None) -> ConstraintSet:
    """sum_S p_i x_i = population mean of x, for each chosen column."""
    cols = list(range(frame.n_x)) if columns is None else list(columns)
    return ConstraintSet(frame.x_s[:, cols], frame.x[:, cols].mean(axis=0),
                         tuple(frame.x_names[c] for c in cols))


def mele(solution: ElSolution, y_sample) -> float:
    """Weighted mean sum_S p_i y_i."""
    if not solution.converged:
        raise ValueError("refusing to use an unconverged EL solution")
    return float(solution.p @ np.asarray(y_sample, dtype=np.float64))
