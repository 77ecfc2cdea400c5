"""Parametric selection model and its estimating-equation fit.

The model is logistic in a linear predictor built from an intercept, selected
auxiliary columns and (for the nonignorable model) the outcome itself::

    logit pi(x, y; phi) = phi_0 + phi_x' x[cov] + phi_y y

``phi`` is estimated from the calibration equations
``N^-1 sum_i (delta_i / pi_i - 1) b(x_i) = 0`` by Gauss-Newton on the squared
norm of the left side.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from elvol import kernels
from elvol.errors import (DegenerateFrameError, NonConvergenceError, SeparationError,
                          SingularNormalEquations)
from elvol.population import PopulationFrame

# exp() argument cap; 1/pi stays finite (~1e304) instead of overflowing
_EXP_CAP = 700.0
# accepted |J'U| / (|J| |U|) once Q can no longer decrease in floating point
_FLAT_COSINE = 1e-6


@dataclass(frozen=True)
class PsParams:
    """Coefficients of the selection model plus the instrument choice.

    ``ps_covariates`` indexes the x columns in the linear predictor. The
    instrument is ``b(x) = (1, x[b_columns])`` (all columns when ``None``).
    """

    phi: np.ndarray
    ps_covariates: tuple = (0,)
    uses_y: bool = True
    b_columns: Optional[tuple] = None
    b_intercept: bool = True

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        want = 1 + len(self.ps_covariates) + int(self.uses_y)
        if phi.size != want:
            raise ValueError(f"phi has {phi.size} entries, model needs {want}")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "ps_covariates", tuple(int(c) for c in self.ps_covariates))
        if self.b_columns is not None:
            object.__setattr__(self, "b_columns", tuple(int(c) for c in self.b_columns))

    @property
    def dim(self) -> int:
        return int(self.phi.size)

    @property
    def phi_y(self) -> float:
        return float(self.phi[-1]) if self.uses_y else 0.0

    def with_phi(self, phi) -> "PsParams":
        return replace(self, phi=np.asarray(phi, dtype=np.float64))


def default_params(n_x: int, phi=None) -> PsParams:
    """Model with x1 and y in the predictor and b = (1, x1, ..., xp)."""
    return PsParams(np.zeros(3) if phi is None else phi, ps_covariates=(0,), uses_y=True)


@dataclass
class FitDiagnostics:
    iterations: int = 0
    final_residual_norm: float = np.inf
    converged: bool = False
    objective_trace: list = field(default_factory=list)
    step_norm: float = np.inf
    method: str = "gauss-newton"


@dataclass(frozen=True)
class FitOptions:
    method: str = "gauss-newton"  # or "newton" (plain, no line search)
    max_iter: int = 200
    tol: float = 1e-9
    step_tol: float = 1e-12
    max_halvings: int = 30
    cond_limit: float = 1e14


# --- model pieces -------------------------------------------------------------

def _as_rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def ps_design(x, y, params: PsParams) -> np.ndarray:
    """Rows h(x, y) = d logit(pi) / d phi = (1, x[cov], y)."""
    x = _as_rows(x)
    cols = [np.ones(x.shape[0]), *(x[:, c] for c in params.ps_covariates)]
    if params.uses_y:
        cols.append(np.broadcast_to(np.asarray(y, dtype=np.float64), (x.shape[0],)))
    return np.column_stack(cols)


def instrument_matrix(x, params: PsParams) -> np.ndarray:
    x = _as_rows(x)
    cols = range(x.shape[1]) if params.b_columns is None else params.b_columns
    parts = [np.ones((x.shape[0], 1))] if params.b_intercept else []
    parts.append(x[:, list(cols)])
    return np.hstack(parts)


def linear_predictor(x, y, params: PsParams) -> np.ndarray:
    return ps_design(x, y, params) @ params.phi


def ps_prob(x_row, y, params: PsParams):
    """Selection probability pi(x, y; phi); scalar in, scalar out."""
    p = expit(linear_predictor(x_row, y, params))
    return float(p[0]) if np.ndim(x_row) == 1 else p


def h_grad(x_row, y, params: PsParams) -> np.ndarray:
    h = ps_design(x_row, y, params)
    return h[0] if np.ndim(x_row) == 1 else h


def odds_inverse(lin):
    """O = (1 - pi) / pi = exp(-lin), capped to stay finite."""
    return np.exp(np.minimum(-lin, _EXP_CAP))


def _respondent_pieces(frame: PopulationFrame, params: PsParams):
    H = ps_design(frame.x_s, frame.y_s if params.uses_y else 0.0, params)
    B = instrument_matrix(frame.x_s, params)
    return H, B


def _ee_and_jacobian(frame, params, H, B, b_total):
    O = odds_inverse(H @ params.phi)
    s, M = kernels.weighted_moments(1.0 + O, O, B, H)
    N = frame.n_units
    return (s - b_total) / N, -M / N


def estimating_eq(frame: PopulationFrame, params: PsParams) -> np.ndarray:
    """U_b(phi) = N^-1 sum_i (delta_i / pi_i - 1) b_i."""
    H, B = _respondent_pieces(frame, params)
    b_total = instrument_matrix(frame.x, params).sum(axis=0)
    return _ee_and_jacobian(frame, params, H, B, b_total)[0]


def estimating_eq_jacobian(frame: PopulationFrame, params: PsParams) -> np.ndarray:
    """dU_b/dphi' = -N^-1 sum_i delta_i O_i b_i h_i'."""
    H, B = _respondent_pieces(frame, params)
    b_total = instrument_matrix(frame.x, params).sum(axis=0)
    return _ee_and_jacobian(frame, params, H, B, b_total)[1]


# --- fitting ------------------------------------------------------------------

def fit_ps(frame: PopulationFrame, init=None, options: FitOptions = FitOptions(),
           params: Optional[PsParams] = None):
    """Solve the calibration estimating equations for phi.

    ``params`` supplies the model structure (default: x1 and y in the
    predictor, b = (1, x)). ``init`` defaults to the MAR logistic fit on the
    same covariates with the y coefficient at zero.

    Returns ``(PsParams, FitDiagnostics)``. Raises NonConvergenceError (with
    diagnostics attached) or SingularNormalEquations.
    """
    frame.require_estimable()
    if params is None:
        params = default_params(frame.n_x)
    q = params.dim
    if init is None:
        init = _default_init(frame, params)
    params = params.with_phi(init)
    H, B = _respondent_pieces(frame, params)
    if B.shape[1] < q:
        raise ValueError(f"instrument has {B.shape[1]} columns but phi has {q}")
    b_total = instrument_matrix(frame.x, params).sum(axis=0)
    exact = B.shape[1] == q

    diag = FitDiagnostics(method=options.method)
    phi = params.phi.copy()
    U, J = _ee_and_jacobian(frame, params, H, B, b_total)
    Q = float(U @ U)
    diag.objective_trace.append(Q)
    diag.final_residual_norm = float(np.max(np.abs(U)))

    def stationary(tol):
        # scale-free: cosine between U and the column space of J
        g = np.linalg.norm(J.T @ U)
        return g <= tol * max(np.linalg.norm(J) * np.linalg.norm(U), 1e-300)

    def done():
        # exactly identified: U can reach zero; otherwise Q has a positive minimum
        if exact:
            return diag.final_residual_norm <= options.tol
        return diag.step_norm <= options.step_tol or stationary(options.tol)

    while not done():
        if diag.iterations >= options.max_iter:
            raise NonConvergenceError(
                f"fit_ps did not converge in {options.max_iter} iterations "
                f"(|U|inf={diag.final_residual_norm:.3g})", diag)
        if options.method == "newton":
            if not exact:
                raise ValueError("plain Newton needs dim(b) == dim(phi)")
            try:
                step = -np.linalg.solve(J, U)
            except np.linalg.LinAlgError:
                raise SingularNormalEquations("Jacobian is singular; try another instrument b") from None
            phi = phi + step
            U, J = _ee_and_jacobian(frame, params.with_phi(phi), H, B, b_total)
            Q = float(U @ U)
            if not np.isfinite(Q):
                raise NonConvergenceError("plain Newton diverged", diag)
        else:
            JtJ = J.T @ J
            if np.linalg.cond(JtJ) > options.cond_limit:
                raise SingularNormalEquations(
                    "Gauss-Newton normal equations are rank deficient; "
                    "choose an instrument b with more variation")
            step = -np.linalg.solve(JtJ, J.T @ U)
            t = 1.0
            for _ in range(options.max_halvings + 1):
                trial = phi + t * step
                with np.errstate(over="ignore", invalid="ignore"):
                    # overflow gives Q_t = inf, which the test below rejects
                    U_t, J_t = _ee_and_jacobian(frame, params.with_phi(trial), H, B, b_total)
                    Q_t = float(U_t @ U_t)
                if not np.isfinite(Q_t):
                    Q_t = np.inf
                if Q_t < Q:
                    break
                t *= 0.5
            else:
                if not exact and (np.linalg.norm(step) <= 1e3 * options.step_tol
                                  or stationary(_FLAT_COSINE)):
                    # Q is flat to rounding: at the least-squares minimum
                    diag.step_norm = 0.0
                    break
                raise NonConvergenceError("line search failed to decrease Q", diag)
            phi, U, J, Q = trial, U_t, J_t, Q_t
            step = t * step
        diag.iterations += 1
        diag.step_norm = float(np.linalg.norm(step))
        diag.objective_trace.append(Q)
        diag.final_residual_norm = float(np.max(np.abs(U)))
    diag.converged = True
    return params.with_phi(phi), diag


def _default_init(frame, params: PsParams) -> np.ndarray:
    try:
        mar = fit_mar_logistic(frame, params.ps_covariates)
        base = mar.phi
    except (SeparationError, NonConvergenceError):
        r = frame.n_sample / frame.n_units
        base = np.r_[np.log(r / (1 - r)), np.zeros(len(params.ps_covariates))]
    return np.r_[base, 0.0] if params.uses_y else base


def fit_mar_logistic(frame: PopulationFrame, covariates: Optional[Sequence[int]] = None,
                     tol: float = 1e-9, max_iter: int = 100) -> PsParams:
    """Logistic MLE of delta on (1, x[covariates]) over all N units.

    Newton-Raphson with step halving on the log-likelihood; convergence when
    the mean score has sup-norm <= ``tol``.
    """
    if frame.n_sample in (0, frame.n_units):
        raise DegenerateFrameError("delta is constant; logistic MLE does not exist")
    cov = tuple(range(frame.n_x)) if covariates is None else tuple(covariates)
    Z = np.column_stack([np.ones(frame.n_units), frame.x[:, list(cov)]])
    d = frame.delta.astype(np.float64)
    N = frame.n_units
    r = d.mean()
    beta = np.zeros(Z.shape[1])
    beta[0] = np.log(r / (1 - r))

    def loglik(b):
        t = Z @ b
        return float(np.sum(d * t - np.logaddexp(0.0, t)))

    ll = loglik(beta)
    for _ in range(max_iter):
        p = expit(Z @ beta)
        score = Z.T @ (d - p)
        if np.max(np.abs(score)) / N <= tol:
            return PsParams(beta, ps_covariates=cov, uses_y=False)
        info = Z.T @ (Z * (p * (1 - p))[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix is singular") from None
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_c = loglik(cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_c
        if np.linalg.norm(beta) > 50:
            raise SeparationError("coefficients diverging (|phi| > 50): data are separated")
    raise NonConvergenceError("MAR logistic fit did not converge")
