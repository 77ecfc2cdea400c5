"""Empirical-likelihood propensity weighting for voluntary samples.

Typical use::

    from elvol import generate_population, ScenarioConfig, estimate_frame
    frame = generate_population(ScenarioConfig("M1", seed=1))
    reports = estimate_frame(frame)
"""
from elvol.el_core import ConstraintSet, ElSolution, build_benchmarking, build_bias_calibration, el_solve, mele
from elvol.errors import (DegenerateFrameError, ElvolError, InfeasibleConstraintsError, InputError,
                          NonConvergenceError, SeparationError, SingularNormalEquations,
                          SingularSystemError)
from elvol.estimators import (EstimatorKind, fit_models, theta_el, theta_el_known_pi, theta_el_mar,
                              theta_full, theta_ps, theta_rps_optimal)
from elvol.kernels import BACKEND
from elvol.pipeline import EstimateReport, estimate_frame
from elvol.population import (ColumnMap, PopulationFrame, Scenario, ScenarioConfig,
                              generate_population, load_population, save_population)
from elvol.ps_fit import FitOptions, PsParams, fit_mar_logistic, fit_ps
from elvol.simulation import McConfig, McSummary, run_coverage, run_monte_carlo
from elvol.smoothing import SmoothedPsModel, fit_alpha, g_hat, smoothed_pi, smoothed_weight
from elvol.variance import confidence_interval, var_el, var_el_known_pi, var_from_influence, var_ps

__version__ = "0.1.0"
