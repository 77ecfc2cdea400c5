"""Linearization variance estimators and Wald intervals.

Each estimator is linearized as a population mean of per-unit influence
values eta_i, defined for every unit (selected or not), and the variance is
estimated by ``sum (eta_i - eta_bar)^2 / (N (N - 1))`` assuming independent
selection indicators.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from elvol.errors import InputError, SingularSystemError
from elvol.estimators import (EstimatorKind, bias_target, known_pi_target, respondent_pi,
                              theta_ps)
from elvol.population import PopulationFrame
from elvol.ps_fit import PsParams, instrument_matrix, ps_design
from elvol.smoothing import SmoothedPsModel, g_hat, outcome_design, smoothed_pi, smoothed_weight

_COND_LIMIT = 1e12


@dataclass
class InfluenceVector:
    eta: np.ndarray
    label: str
    coef: dict = field(default_factory=dict)


def var_from_influence(eta) -> float:
    eta = np.asarray(eta, dtype=np.float64)
    N = eta.size
    if N < 2:
        raise ValueError("need at least two influence values")
    return float(np.sum((eta - eta.mean()) ** 2) / (N * (N - 1)))


def _solve(A, rhs, what):
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise SingularSystemError(f"{what}: matrix is singular or ill-conditioned")
    return np.linalg.solve(A, rhs)


def wls(R, w, y, what="weighted regression"):
    """Coefficients of the weighted least-squares fit of y on R (no intercept)."""
    R = np.asarray(R, dtype=np.float64)
    RW = R * np.asarray(w)[:, None]
    return _solve(RW.T @ R, RW.T @ y, what)


# --- known pi -----------------------------------------------------------------

def beta_known_pi(frame: PopulationFrame, true_pi, W: float):
    """(beta1, beta2): weights pi^-2, regressors (pi - W, x - X_bar) over respondents."""
    pi_s = np.asarray(true_pi, dtype=np.float64)[frame.resp]
    R = np.column_stack([pi_s - W, frame.x_s - frame.x.mean(axis=0)])
    coef = wls(R, pi_s ** -2.0, frame.y_s, "known-pi regression")
    return float(coef[0]), coef[1:]


def var_el_known_pi(frame: PopulationFrame, true_pi=None, w_rule: str = "exact",
                    theta: float = None, literal: bool = False):
    """Variance of the known-pi EL estimator.

    The default influence carries the intercept and scale terms that come from
    normalizing the EL weights: ``y^_i = -(W b1 + X_bar'b2) + pi_i (b1 + theta/W)
    + x_i'b2``. ``literal=True`` uses ``y^_i = pi_i b1 + x_i'b2`` instead, which
    overstates the variance whenever the outcome is far from the origin.
    """
    if true_pi is None:
        if frame.oracle is None:
            raise InputError("known-pi variance needs the true selection probabilities")
        true_pi = frame.oracle.true_pi
    true_pi = np.asarray(true_pi, dtype=np.float64)
    W = known_pi_target(frame, true_pi, w_rule)
    b1, b2 = beta_known_pi(frame, true_pi, W)
    if literal:
        yhat = true_pi * b1 + frame.x @ b2
    else:
        if theta is None:
            theta = float(np.sum(frame.y_s / true_pi[frame.resp]) / frame.n_units)
        x_bar = frame.x.mean(axis=0)
        yhat = -(W * b1 + x_bar @ b2) + true_pi * (b1 + theta / W) + frame.x @ b2
    eta = yhat.copy()
    r = frame.resp
    eta[r] += (frame.y_s - yhat[r]) / true_pi[r]
    iv = InfluenceVector(eta, EstimatorKind.EL_KNOWN_PI.label, {"beta1": b1, "beta2": b2, "W": W})
    return var_from_influence(eta), iv


# --- PS estimator -------------------------------------------------------------

def _bh_matrix(frame, ps, pi_s):
    """sum_S (1/pi_i - 1) b_i h_i'."""
    w = 1.0 / pi_s - 1.0
    H = ps_design(frame.x_s, frame.y_s if ps.uses_y else 0.0, ps)
    B = instrument_matrix(frame.x_s, ps)
    return B.T @ (H * w[:, None]), H, w


def gamma_hat(frame: PopulationFrame, ps: PsParams) -> np.ndarray:
    """gamma' = {sum_S w y h'} {sum_S w b h'}^-1 with w = 1/pi - 1."""
    A, H, w = _bh_matrix(frame, ps, respondent_pi(frame, ps))
    if A.shape[0] != A.shape[1]:
        raise ValueError("gamma_hat needs dim(b) == dim(phi)")
    return _solve(A.T, H.T @ (w * frame.y_s), "gamma_hat")


def var_ps(frame: PopulationFrame, ps: PsParams):
    gamma = gamma_hat(frame, ps)
    pi_s = respondent_pi(frame, ps)
    fit = instrument_matrix(frame.x, ps) @ gamma
    eta = fit.copy()
    r = frame.resp
    eta[r] += (frame.y_s - fit[r]) / pi_s
    return var_from_influence(eta), InfluenceVector(eta, EstimatorKind.PS.label, {"gamma": gamma})


# --- EL estimators ------------------------------------------------------------

def kappa1_hat(frame: PopulationFrame, ps: PsParams, smoothed: SmoothedPsModel,
               g_total=None) -> np.ndarray:
    """kappa1' = -(sum_i g_i)' {sum_S w b h'}^-1, g summed over all N units."""
    A, _, _ = _bh_matrix(frame, ps, respondent_pi(frame, ps))
    if g_total is None:
        g_total = g_hat(frame.x, smoothed).sum(axis=0)
    return -_solve(A.T, np.asarray(g_total, dtype=np.float64), "kappa1_hat")


def kappa2_hat(frame: PopulationFrame, ps: PsParams, beta2) -> np.ndarray:
    """kappa2' = {sum_S w (y - x'beta2) h'} {sum_S w b h'}^-1."""
    A, H, w = _bh_matrix(frame, ps, respondent_pi(frame, ps))
    beta2 = np.asarray(beta2, dtype=np.float64)
    resid = frame.y_s - (frame.x_s @ beta2 if beta2.size else 0.0)
    return _solve(A.T, H.T @ (w * resid), "kappa2_hat")


def el_regression(frame: PopulationFrame, pi_s, W: float, benchmark: bool = True):
    """(beta1, beta2) from the pi^-2 weighted fit on (pi - W, x - X_bar)."""
    cols = [pi_s - W]
    if benchmark:
        cols.append(frame.x_s - frame.x.mean(axis=0))
    coef = wls(np.column_stack(cols), pi_s ** -2.0, frame.y_s, "EL linearization regression")
    return float(coef[0]), coef[1:]


def alpha_sensitivity(frame: PopulationFrame, smoothed: SmoothedPsModel):
    """Linear terms for the error in alpha^ as seen through W^ = mean pi^(x).

    Returns ``(a, g_phi_extra)``. ``a`` solves ``G_alpha' a = sum_i d pi^_i / d alpha``,
    where ``G_alpha`` is the Jacobian of the alpha calibration equations, so that
    the alpha error adds ``-a'(delta_i omega_i - 1) b_i`` per unit. ``g_phi_extra``
    is ``-G_phi' a``, the part of d W^/d phi that flows through alpha^(phi).
    """
    ps = smoothed.params
    r = frame.resp
    pi_all = smoothed_pi(frame.x, smoothed)
    s_all = pi_all * (1.0 - pi_all)
    Xt = outcome_design(frame.x)
    Bs = instrument_matrix(frame.x_s, ps)
    odds = smoothed_weight(frame.x_s, smoothed) - 1.0
    grad_alpha = ps.phi_y * (Xt * s_all[:, None]).sum(axis=0)
    G_alpha = -ps.phi_y * (Bs * odds[:, None]).T @ Xt[r]
    D = g_hat(frame.x_s, smoothed) / s_all[r][:, None]
    G_phi = -(Bs * odds[:, None]).T @ D
    a = _solve(G_alpha.T, grad_alpha, "alpha calibration Jacobian")
    return a, -G_phi.T @ a


def var_el(frame: PopulationFrame, ps: PsParams, smoothed: SmoothedPsModel,
           kind: EstimatorKind = EstimatorKind.EL2, w_rule: str = "smoothed",
           theta: float = None, literal: bool = False):
    """Variance of EL-1 / EL-2 including the estimation error in phi and alpha.

    ``literal=True`` drops the alpha term and the theta/W scale term, leaving
    only the phi error. That version understates the variance noticeably when
    the respondent outcome model is misspecified.
    """
    kind = EstimatorKind(kind)
    benchmark = kind is EstimatorKind.EL2
    pi_s = respondent_pi(frame, ps)
    pi_smooth = smoothed_pi(frame.x, smoothed)
    W = bias_target(frame, smoothed, w_rule)
    b1, b2 = el_regression(frame, pi_s, W, benchmark)
    B = instrument_matrix(frame.x, ps)
    r = frame.resp
    g_total = g_hat(frame.x, smoothed).sum(axis=0)
    alpha_part = np.zeros(frame.n_units)
    if not literal:
        if theta is None:
            theta = theta_ps(frame, ps)
        b1 = b1 + theta / W
        if w_rule == "smoothed" and not smoothed.degenerate:
            a, g_extra = alpha_sensitivity(frame, smoothed)
            g_total = g_total + g_extra
            alpha_part = B @ a
            alpha_part[r] -= smoothed_weight(frame.x_s, smoothed) * alpha_part[r]
    k1 = kappa1_hat(frame, ps, smoothed, g_total)
    k2 = kappa2_hat(frame, ps, b2)
    xb = frame.x @ b2 if benchmark else np.zeros(frame.n_units)
    corr = B @ k2
    y0 = b1 * (pi_smooth + B @ k1 + alpha_part) + xb + corr
    y1 = b1 * (pi_s + B[r] @ k1) + xb[r] + corr[r]
    eta = y0.copy()
    eta[r] += (frame.y_s - y1) / pi_s
    iv = InfluenceVector(eta, kind.label,
                         {"beta1": b1, "beta2": b2, "kappa1": k1, "kappa2": k2, "W": W})
    return var_from_influence(eta), iv


# --- intervals ----------------------------------------------------------------

def normal_quantile(prob: float) -> float:
    """Standard normal quantile (Wichura's AS241 rational approximation via statistics)."""
    return NormalDist().inv_cdf(prob)


def confidence_interval(theta: float, v: float, level: float = 0.95):
    if v < 0:
        raise ValueError("variance must be non-negative")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must be in [0, 1)")
    half = normal_quantile(0.5 + level / 2.0) * np.sqrt(v)
    return theta - half, theta + half


def export_influence(iv: InfluenceVector, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "eta"])
        for i, e in enumerate(iv.eta):
            w.writerow([i, repr(float(e))])
