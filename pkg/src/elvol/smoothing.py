"""Smoothed propensity score under a Gaussian respondent outcome model.

With ``y | x, delta=1 ~ N(x~'alpha, sigma2)`` and the logistic selection
model, the smoothed inverse propensity has the closed form::

    omega(x) = E{1/pi(x, Y) | x, delta=1}
             = 1 + exp(-phi_0 - phi_x'x[cov] - phi_y x~'alpha + phi_y^2 sigma2 / 2)

``alpha`` is chosen so the smoothed weights reproduce the instrument totals,
``sum_i delta_i omega(x_i) b_i = sum_i b_i``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from elvol import kernels
from elvol.errors import NonConvergenceError
from elvol.population import PopulationFrame
from elvol.ps_fit import PsParams, _EXP_CAP, _as_rows, instrument_matrix, linear_predictor

DEGENERATE_PHI_Y = 1e-8


@dataclass(frozen=True)
class SmoothedPsModel:
    params: PsParams
    alpha: np.ndarray
    sigma2: float = 1.0
    calibration_residual: float = 0.0
    degenerate: bool = False
    iterations: int = 0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64))


def outcome_design(x) -> np.ndarray:
    """x~ = (1, x)."""
    x = _as_rows(x)
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _offset(x, params: PsParams, sigma2: float) -> np.ndarray:
    """The part of the smoothed linear predictor that does not involve alpha."""
    x = _as_rows(x)
    phi = params.phi
    t = phi[0] + x[:, list(params.ps_covariates)] @ phi[1:1 + len(params.ps_covariates)]
    return t - 0.5 * params.phi_y ** 2 * sigma2


def smoothed_linear(x, model: SmoothedPsModel) -> np.ndarray:
    return _offset(x, model.params, model.sigma2) + model.params.phi_y * (outcome_design(x) @ model.alpha)


def _maybe_scalar(x_row, v):
    return float(v[0]) if np.ndim(x_row) == 1 else v


def smoothed_pi(x_row, model: SmoothedPsModel):
    """pi^(x) = 1 / omega(x), in (0, 1)."""
    return _maybe_scalar(x_row, expit(smoothed_linear(x_row, model)))


def smoothed_weight(x_row, model: SmoothedPsModel):
    return _maybe_scalar(x_row, 1.0 + np.exp(np.minimum(-smoothed_linear(x_row, model), _EXP_CAP)))


def g_hat(x_row, model: SmoothedPsModel) -> np.ndarray:
    """Gradient of pi^(x; phi) in phi with (alpha, sigma2) held fixed."""
    x = _as_rows(x_row)
    p = expit(smoothed_linear(x, model))
    s = p * (1.0 - p)
    cols = [s, *(x[:, c] * s for c in model.params.ps_covariates)]
    if model.params.uses_y:
        cols.append((outcome_design(x) @ model.alpha - model.params.phi_y * model.sigma2) * s)
    g = np.column_stack(cols)
    return g[0] if np.ndim(x_row) == 1 else g


def _ols(frame: PopulationFrame):
    Xt = outcome_design(frame.x_s)
    coef, *_ = np.linalg.lstsq(Xt, frame.y_s, rcond=None)
    resid = frame.y_s - Xt @ coef
    dof = max(Xt.shape[0] - Xt.shape[1], 1)
    return coef, float(resid @ resid / dof)


def calibration_gap(frame: PopulationFrame, model: SmoothedPsModel) -> np.ndarray:
    """sum_i delta_i omega(x_i) b_i - sum_i b_i (zero after fit_alpha)."""
    w = smoothed_weight(frame.x_s, model)
    return (instrument_matrix(frame.x_s, model.params).T @ w
            - instrument_matrix(frame.x, model.params).sum(axis=0))


def fit_alpha(frame: PopulationFrame, ps: PsParams, sigma2: Union[float, str] = 1.0,
              tol: float = 1e-9, max_iter: int = 200) -> SmoothedPsModel:
    """Choose alpha so the smoothed weights satisfy the instrument calibration.

    Solves ``sum_S exp(c_i - phi_y x~_i'alpha) b_i = sum_{delta=0} b_i`` with
    ``c_i = -phi_0 - phi_x'x_i[cov] + phi_y^2 sigma2 / 2`` by Newton (Gauss-Newton
    when b and x~ differ in length), starting from respondent OLS.

    ``sigma2="ols"`` uses the respondent OLS residual variance.
    """
    frame.require_estimable()
    alpha0, s2_ols = _ols(frame)
    if isinstance(sigma2, str):
        if sigma2 != "ols":
            raise ValueError("sigma2 must be a positive number or 'ols'")
        sigma2 = s2_ols
    sigma2 = float(sigma2)
    if abs(ps.phi_y) <= DEGENERATE_PHI_Y:
        model = SmoothedPsModel(ps, alpha0, sigma2, degenerate=True)
        gap = calibration_gap(frame, model)
        return SmoothedPsModel(ps, alpha0, sigma2, float(np.max(np.abs(gap))), True)

    N = frame.n_units
    Xt = outcome_design(frame.x_s)
    Bs = instrument_matrix(frame.x_s, ps)
    b_nonresp = (instrument_matrix(frame.x, ps).sum(axis=0) - Bs.sum(axis=0))
    c = -_offset(frame.x_s, ps, sigma2)
    phi_y = ps.phi_y

    def resid_jac(a):
        e = np.exp(np.minimum(c - phi_y * (Xt @ a), _EXP_CAP))
        s, M = kernels.weighted_moments(e, e, Bs, Xt)
        return s - b_nonresp, -phi_y * M

    alpha = alpha0.copy()
    F, J = resid_jac(alpha)
    obj = float(F @ F)
    it = 0
    while np.max(np.abs(F)) / N > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"fit_alpha did not converge in {max_iter} iterations")
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        t = 1.0
        for _ in range(60):
            F_t, J_t = resid_jac(alpha + t * step)
            obj_t = float(F_t @ F_t)
            if obj_t < obj:
                break
            t *= 0.5
        else:
            raise NonConvergenceError("fit_alpha line search stalled")
        alpha, F, J, obj = alpha + t * step, F_t, J_t, obj_t
        it += 1
    return SmoothedPsModel(ps, alpha, sigma2, float(np.max(np.abs(F))), False, it)


def obs_loglik(frame: PopulationFrame, model: SmoothedPsModel) -> float:
    """Observed log-likelihood with the smoothed PS for the unselected units.

    Diagnostic only. Terms below log(smallest normal double) are clamped and a
    RuntimeWarning is emitted.
    """
    ps = model.params
    lin_s = linear_predictor(frame.x_s, frame.y_s if ps.uses_y else 0.0, ps)
    lin_0 = smoothed_linear(frame.x[~frame.resp], model)
    terms = np.concatenate([-np.logaddexp(0.0, -lin_s), -np.logaddexp(0.0, lin_0)])
    floor = np.log(np.finfo(np.float64).tiny)
    if np.any(terms < floor):
        warnings.warn("obs_loglik: terms clamped at log(tiny)", RuntimeWarning, stacklevel=2)
        terms = np.maximum(terms, floor)
    return float(terms.sum())
