import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elvol import SmoothedPsModel, fit_alpha, fit_ps, g_hat, smoothed_pi, smoothed_weight
from elvol.ps_fit import default_params, instrument_matrix
from elvol.smoothing import calibration_gap, obs_loglik, outcome_design
from oracles import central_diff, quad_smoothed_pi


def _model(phi, alpha, sigma2=1.0):
    return SmoothedPsModel(default_params(2, phi), np.asarray(alpha, dtype=float), sigma2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 3.0))
def test_closed_form_equals_quadrature(phi, alpha, x1, x2, sigma2):
    m = _model(phi, alpha, sigma2)
    x = np.array([x1, x2])
    mean = float(outcome_design(x)[0] @ m.alpha)
    want = quad_smoothed_pi(x1, mean, phi, sigma2)
    assert smoothed_pi(x, m) == pytest.approx(want, rel=1e-8, abs=1e-300)


def test_weight_is_reciprocal_of_pi():
    m = _model([-1, 0.5, 0.3], [0.1, 0.2, -0.3])
    x = np.random.default_rng(1).normal(size=(50, 2))
    np.testing.assert_allclose(smoothed_weight(x, m) * smoothed_pi(x, m), 1.0, rtol=1e-14)


def test_pi_in_unit_interval_at_extremes():
    m = _model([-1, 0.5, 3.0], [0.0, 50.0, 0.0])
    x = np.array([[-40.0, 0.0], [40.0, 0.0]])
    p = smoothed_pi(x, m)
    assert np.all((p >= 0) & (p <= 1)) and np.all(np.isfinite(smoothed_weight(x, m)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3),
       st.floats(-2, 2), st.floats(-2, 2))
def test_g_hat_matches_finite_differences(phi, alpha, x1, x2):
    m = _model(phi, alpha)
    x = np.array([x1, x2])
    g = g_hat(x, m)
    fd = central_diff(lambda p: smoothed_pi(x, _model(p, alpha)), np.array(phi), h=1e-5)[0]
    assert np.max(np.abs(g - fd)) <= 1e-6 * max(np.max(np.abs(g)), 1e-12)


def test_fit_alpha_calibrates_instrument(m2_frame):
    ps, _ = fit_ps(m2_frame)
    sm = fit_alpha(m2_frame, ps)
    B = instrument_matrix(m2_frame.x, ps)
    lhs = (smoothed_weight(m2_frame.x_s, sm)[:, None] * B[m2_frame.resp]).sum(axis=0)
    assert np.max(np.abs(lhs - B.sum(axis=0))) <= 1e-6 * m2_frame.n_units
    assert not sm.degenerate and sm.iterations > 0
    np.testing.assert_allclose(calibration_gap(m2_frame, sm), lhs - B.sum(axis=0), atol=1e-8)


def test_fit_alpha_ols_variance(m1_frame):
    ps, _ = fit_ps(m1_frame)
    sm = fit_alpha(m1_frame, ps, sigma2="ols")
    assert sm.sigma2 == pytest.approx(1.0, abs=0.15)
    assert np.max(np.abs(calibration_gap(m1_frame, sm))) <= 1e-6 * m1_frame.n_units
    with pytest.raises(ValueError):
        fit_alpha(m1_frame, ps, sigma2="mle")


def test_degenerate_phi_y_uses_ols(m1_frame):
    ps = default_params(2, [-0.5, 0.3, 0.0])
    sm = fit_alpha(m1_frame, ps)
    assert sm.degenerate
    X = outcome_design(m1_frame.x_s)
    ref = np.linalg.lstsq(X, m1_frame.y_s, rcond=None)[0]
    np.testing.assert_allclose(sm.alpha, ref, rtol=1e-10)


def test_obs_loglik_finite_and_warns_on_clamp(m1_frame):
    ps, _ = fit_ps(m1_frame)
    sm = fit_alpha(m1_frame, ps)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.isfinite(obs_loglik(m1_frame, sm))
    extreme = SmoothedPsModel(ps.with_phi([800.0, 0.0, 0.0]), sm.alpha)
    with pytest.warns(RuntimeWarning):
        assert np.isfinite(obs_loglik(m1_frame, extreme))


def test_sigma2_must_be_positive():
    with pytest.raises(ValueError):
        _model([0, 0, 1], [0, 0, 0], sigma2=0.0)
