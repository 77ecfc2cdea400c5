"""Point estimators of the population mean.

FULL and EL_KNOWN_PI need simulation oracle data; everything else uses only
(x for all units, delta, y for respondents).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from elvol.el_core import (ElOptions, ElSolution, build_bias_calibration, build_benchmarking,
                           el_solve, mele)
from elvol.errors import InputError, SingularSystemError
from elvol.population import PopulationFrame
from elvol.ps_fit import (FitDiagnostics, FitOptions, PsParams, fit_mar_logistic, fit_ps,
                          instrument_matrix, linear_predictor, ps_design)
from elvol.smoothing import SmoothedPsModel, fit_alpha, smoothed_pi


class EstimatorKind(str, enum.Enum):
    FULL = "full"
    EL_MAR = "el-mar"
    PS = "ps"
    EL1 = "el1"
    EL2 = "el2"
    EL_KNOWN_PI = "el-known-pi"
    RPS_OPT = "rps-opt"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    EstimatorKind.FULL: "Full",
    EstimatorKind.EL_MAR: "EL-MAR",
    EstimatorKind.PS: "PS",
    EstimatorKind.EL1: "EL-1",
    EstimatorKind.EL2: "EL-2",
    EstimatorKind.EL_KNOWN_PI: "EL-KNOWN-PI",
    EstimatorKind.RPS_OPT: "RPS-OPT",
}


@dataclass
class FittedModels:
    """Selection-model fit shared by the PS-based estimators of one frame."""

    ps: PsParams
    diagnostics: FitDiagnostics
    smoothed: SmoothedPsModel


def fit_models(frame: PopulationFrame, ps_template: Optional[PsParams] = None,
               fit_options: FitOptions = FitOptions(), sigma2=1.0) -> FittedModels:
    ps, diag = fit_ps(frame, options=fit_options, params=ps_template)
    return FittedModels(ps, diag, fit_alpha(frame, ps, sigma2))


def respondent_pi(frame: PopulationFrame, ps: PsParams) -> np.ndarray:
    """pi(x_i, y_i; phi) for the selected units."""
    return expit(linear_predictor(frame.x_s, frame.y_s if ps.uses_y else 0.0, ps))


def theta_full(frame: PopulationFrame) -> float:
    if frame.oracle is None:
        raise InputError("the full-population mean needs y for every unit (simulation frames only)")
    return float(np.mean(frame.oracle.y_full))


def theta_ps(frame: PopulationFrame, ps: PsParams) -> float:
    return float(np.sum(frame.y_s / respondent_pi(frame, ps)) / frame.n_units)


def bias_target(frame: PopulationFrame, smoothed: SmoothedPsModel, w_rule: str = "smoothed") -> float:
    if w_rule == "ht":
        return frame.n_sample / frame.n_units
    if w_rule != "smoothed":
        raise ValueError("w_rule must be 'smoothed' or 'ht'")
    return float(np.mean(smoothed_pi(frame.x, smoothed)))


def theta_el(frame: PopulationFrame, ps: PsParams, smoothed: SmoothedPsModel,
             kind: EstimatorKind = EstimatorKind.EL2, w_rule: str = "smoothed",
             options: ElOptions = ElOptions()):
    """EL-1 (bias calibration) or EL-2 (plus benchmarking). Returns (theta, ElSolution)."""
    kind = EstimatorKind(kind)
    if kind not in (EstimatorKind.EL1, EstimatorKind.EL2):
        raise ValueError("kind must be EL1 or EL2")
    cs = build_bias_calibration(respondent_pi(frame, ps), bias_target(frame, smoothed, w_rule))
    if kind is EstimatorKind.EL2:
        cs = cs + build_benchmarking(frame)
    sol = el_solve(cs, options)
    return mele(sol, frame.y_s), sol


def known_pi_target(frame: PopulationFrame, true_pi, w_rule: str = "exact") -> float:
    if w_rule == "ht":
        return frame.n_sample / frame.n_units
    if w_rule != "exact":
        raise ValueError("w_rule must be 'exact' or 'ht'")
    return float(np.mean(true_pi))


def theta_el_known_pi(frame: PopulationFrame, true_pi=None, w_rule: str = "exact",
                      benchmark: bool = True, options: ElOptions = ElOptions()):
    """EL with the true selection probabilities (probability-sample setting)."""
    if true_pi is None:
        if frame.oracle is None:
            raise InputError("known-pi EL needs the true selection probabilities")
        true_pi = frame.oracle.true_pi
    true_pi = np.asarray(true_pi, dtype=np.float64)
    cs = build_bias_calibration(true_pi[frame.resp], known_pi_target(frame, true_pi, w_rule))
    if benchmark:
        cs = cs + build_benchmarking(frame)
    sol = el_solve(cs, options)
    return mele(sol, frame.y_s), sol


def theta_el_mar(frame: PopulationFrame, covariates=None, options: ElOptions = ElOptions()):
    """EL with a MAR logistic PS on x, bias calibration and benchmarking."""
    mar = fit_mar_logistic(frame, covariates)
    pi_all = expit(linear_predictor(frame.x, 0.0, mar))
    cs = build_bias_calibration(pi_all[frame.resp], float(pi_all.mean())) + build_benchmarking(frame)
    sol = el_solve(cs, options)
    return mele(sol, frame.y_s), sol


@dataclass
class RpsFit:
    theta: float
    beta: np.ndarray
    gamma: np.ndarray
    identified: bool = True


def rps_coefficients(frame: PopulationFrame, ps: PsParams) -> RpsFit:
    """Optimal regression-PS coefficients and estimate.

    (beta, gamma) solve the weighted normal equations with weights
    1/pi_i - 1, design (x, b) and test functions (x, h). When x lies in the
    span of b the split between beta and gamma is not identified (and the
    system is generally overdetermined), but the estimate does not depend on
    it because the fitted PS already calibrates b. The minimum-norm
    least-squares solution is used and that invariance is checked.
    """
    pi_s = respondent_pi(frame, ps)
    w = 1.0 / pi_s - 1.0
    Xs = frame.x_s
    E = np.hstack([Xs, ps_design(Xs, frame.y_s if ps.uses_y else 0.0, ps)])
    D = np.hstack([Xs, instrument_matrix(Xs, ps)])
    M = E.T @ (D * w[:, None])
    c = E.T @ (w * frame.y_s)
    p = Xs.shape[1]
    N = frame.n_units
    gap = (frame.x.sum(axis=0) - (Xs / pi_s[:, None]).sum(axis=0)) / N

    _, s, Vt = np.linalg.svd(M)
    tol = max(M.shape) * np.finfo(float).eps * s[0] * 1e3
    rank = int(np.sum(s > tol))
    coef, *_ = np.linalg.lstsq(M, c, rcond=tol / s[0])
    identified = rank == M.shape[1]
    if not identified:
        null = Vt[rank:]
        effect = null[:, :p] @ gap
        if np.max(np.abs(effect)) > 1e-7 * max(1.0, abs(float(np.mean(frame.y_s)))):
            raise SingularSystemError("optimal RPS coefficient is not identified; "
                                      "remove collinear columns from x or b")
    beta = coef[:p]
    theta = float((frame.x @ beta).sum() / N + np.sum((frame.y_s - Xs @ beta) / pi_s) / N)
    return RpsFit(theta, beta, coef[p:], identified)


def theta_rps_optimal(frame: PopulationFrame, ps: PsParams, smoothed=None) -> float:
    return rps_coefficients(frame, ps).theta
