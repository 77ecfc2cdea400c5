"""Run a set of estimators on one frame and collect reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from elvol.errors import ElvolError
from elvol.estimators import (EstimatorKind, FittedModels, fit_models, theta_el, theta_el_known_pi,
                              theta_el_mar, theta_full, theta_ps, theta_rps_optimal)
from elvol.population import PopulationFrame
from elvol.ps_fit import FitOptions, PsParams
from elvol.smoothing import obs_loglik
from elvol.variance import InfluenceVector, confidence_interval, var_el, var_el_known_pi, var_ps

DEFAULT_ESTIMATORS = (EstimatorKind.FULL, EstimatorKind.EL_MAR, EstimatorKind.PS,
                      EstimatorKind.EL1, EstimatorKind.EL2)


@dataclass
class EstimateReport:
    kind: EstimatorKind
    theta: float = np.nan
    vhat: Optional[float] = None
    ci: Optional[tuple] = None
    influence: Optional[InfluenceVector] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)
    error: Optional[ElvolError] = None

    @property
    def label(self) -> str:
        return self.kind.label

    @property
    def ok(self) -> bool:
        return self.error is None


_NEEDS_PS = {EstimatorKind.PS, EstimatorKind.EL1, EstimatorKind.EL2, EstimatorKind.RPS_OPT}


def estimate_frame(frame: PopulationFrame, estimators: Iterable = DEFAULT_ESTIMATORS,
                   ci_level: float = 0.95, ps_template: Optional[PsParams] = None,
                   fit_options: FitOptions = FitOptions(), sigma2=1.0, w_rule: str = "smoothed",
                   raise_errors: bool = False) -> list:
    """Estimate the population mean with each requested estimator.

    The selection model is fitted once and shared. Failures are recorded on
    the report (or re-raised with ``raise_errors``) and do not stop the other
    estimators.
    """
    kinds = [EstimatorKind(k) for k in estimators]
    models: Optional[FittedModels] = None
    model_error = None
    if any(k in _NEEDS_PS for k in kinds):
        try:
            models = fit_models(frame, ps_template, fit_options, sigma2)
        except ElvolError as exc:
            if raise_errors:
                raise
            model_error = exc

    reports = []
    for kind in kinds:
        rep = EstimateReport(kind)
        try:
            if kind in _NEEDS_PS and models is None:
                raise model_error
            _run_one(frame, kind, models, rep, w_rule)
            if rep.vhat is not None:
                rep.ci = confidence_interval(rep.theta, rep.vhat, ci_level)
        except ElvolError as exc:
            if raise_errors:
                raise
            rep.error = exc
        reports.append(rep)
    return reports


def _run_one(frame, kind, models, rep, w_rule):
    if kind is EstimatorKind.FULL:
        rep.theta = theta_full(frame)
    elif kind is EstimatorKind.EL_MAR:
        rep.theta, sol = theta_el_mar(frame)
        rep.diagnostics["constraint_residual"] = sol.constraint_residual.tolist()
    elif kind is EstimatorKind.EL_KNOWN_PI:
        rep.theta, sol = theta_el_known_pi(frame)
        rep.vhat, rep.influence = var_el_known_pi(frame, theta=rep.theta)
        rep.diagnostics["constraint_residual"] = sol.constraint_residual.tolist()
    else:
        ps, smoothed = models.ps, models.smoothed
        rep.diagnostics.update(phi=ps.phi.tolist(), fit_iterations=models.diagnostics.iterations,
                               alpha=smoothed.alpha.tolist())
        if kind is EstimatorKind.PS:
            rep.theta = theta_ps(frame, ps)
            rep.vhat, rep.influence = var_ps(frame, ps)
        elif kind is EstimatorKind.RPS_OPT:
            rep.theta = theta_rps_optimal(frame, ps, smoothed)
        else:
            rep.theta, sol = theta_el(frame, ps, smoothed, kind, w_rule)
            rep.vhat, rep.influence = var_el(frame, ps, smoothed, kind, w_rule, theta=rep.theta)
            rep.diagnostics["constraint_residual"] = sol.constraint_residual.tolist()
            rep.diagnostics["obs_loglik"] = obs_loglik(frame, smoothed)
