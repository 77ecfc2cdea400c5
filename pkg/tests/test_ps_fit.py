import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elvol import (ElvolError, FitOptions, PsParams, ScenarioConfig, SeparationError,
                   fit_mar_logistic, fit_ps, generate_population)
from elvol.errors import DegenerateFrameError
from elvol.ps_fit import (default_params, estimating_eq, estimating_eq_jacobian, h_grad,
                          instrument_matrix, linear_predictor, ps_prob)
from oracles import central_diff, naive_estimating_eq
from conftest import toy_frame


def test_estimating_eq_matches_naive_loop(m1_frame):
    phi = np.array([-1.5, 0.8, 0.3])
    got = estimating_eq(m1_frame, default_params(2, phi))
    want = naive_estimating_eq(m1_frame.x, m1_frame.delta, m1_frame.oracle.y_full, phi)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_jacobian_matches_finite_differences(seed, a, b, c):
    f = generate_population(ScenarioConfig("M2", n_units=60, seed=seed))
    if f.is_degenerate:
        return
    params = default_params(2, [a, b, c])
    J = estimating_eq_jacobian(f, params)
    fd = central_diff(lambda p: estimating_eq(f, params.with_phi(p)), params.phi, h=1e-6)
    scale = max(np.max(np.abs(J)), 1e-8)
    assert np.max(np.abs(J - fd)) <= 1e-5 * scale


def test_fit_satisfies_calibration(m1_frame):
    ps, diag = fit_ps(m1_frame)
    assert diag.converged
    pi = ps_prob(m1_frame.x_s, m1_frame.y_s, ps)
    B = instrument_matrix(m1_frame.x, ps)
    total = (B[m1_frame.resp] / pi[:, None]).sum(axis=0) - B.sum(axis=0)
    assert np.max(np.abs(total)) <= 1e-9 * m1_frame.n_units
    # Q decreases monotonically along the Gauss-Newton path
    assert all(b <= a for a, b in zip(diag.objective_trace, diag.objective_trace[1:]))


def test_fit_recovers_truth_roughly():
    f = generate_population(ScenarioConfig("M1", n_units=20_000, seed=3))
    ps, _ = fit_ps(f)
    np.testing.assert_allclose(ps.phi, [-2.0, 1.0, 0.5], atol=0.25)


def test_plain_newton_agrees_with_gauss_newton(m2_frame):
    a, _ = fit_ps(m2_frame)
    b, _ = fit_ps(m2_frame, options=FitOptions(method="newton"))
    np.testing.assert_allclose(a.phi, b.phi, atol=1e-8)


def test_overidentified_instrument_converges(m1_frame):
    # dropping x1 from the predictor leaves dim(b) = 3 > dim(phi) = 2
    params = PsParams(np.zeros(2), ps_covariates=(), uses_y=True)
    ps, diag = fit_ps(m1_frame, params=params)
    assert diag.converged and ps.dim == 2
    # least-squares solution: U is orthogonal to the columns of J
    U = estimating_eq(m1_frame, ps)
    J = estimating_eq_jacobian(m1_frame, ps)
    assert np.linalg.norm(J.T @ U) <= 1e-6 * np.linalg.norm(J) * np.linalg.norm(U)
    assert U @ U > 1e-3  # the misspecified model cannot calibrate x1


def test_linear_predictor_and_gradient():
    params = default_params(2, [0.5, -1.0, 2.0])
    x = np.array([1.0, 3.0])
    assert linear_predictor(x, 0.25, params)[0] == pytest.approx(0.5 - 1.0 + 0.5)
    np.testing.assert_array_equal(h_grad(x, 0.25, params), [1.0, 1.0, 0.25])


def test_mar_logistic_matches_scipy(m1_frame):
    from scipy.optimize import minimize

    Z = np.column_stack([np.ones(m1_frame.n_units), m1_frame.x])
    d = m1_frame.delta

    def nll(b):
        t = Z @ b
        return float(np.sum(np.logaddexp(0, t) - d * t))

    ref = minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-9}).x
    got = fit_mar_logistic(m1_frame).phi
    np.testing.assert_allclose(got, ref, atol=1e-5)


def test_mar_logistic_separation():
    x = np.arange(20.0)[:, None]
    delta = (x[:, 0] >= 10).astype(int)
    f = toy_frame()
    from elvol import PopulationFrame

    sep = PopulationFrame(x, delta, np.where(delta == 1, 1.0, np.nan))
    with pytest.raises(SeparationError):
        fit_mar_logistic(sep)
    assert fit_mar_logistic(f).dim == 3


def test_degenerate_frame_rejected():
    from elvol import PopulationFrame

    f = PopulationFrame(np.ones((4, 1)), [1, 1, 1, 1], [1.0, 2, 3, 4])
    with pytest.raises(DegenerateFrameError):
        fit_ps(f)


def test_nonconvergence_carries_diagnostics(m1_frame):
    with pytest.raises(ElvolError) as exc:
        fit_ps(m1_frame, options=FitOptions(max_iter=1))
    assert exc.value.diagnostics.iterations == 1
