import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from elvol import (EstimatorKind, PopulationFrame, ScenarioConfig, confidence_interval, fit_models,
                   generate_population, theta_el, theta_el_known_pi, theta_ps, var_el,
                   var_el_known_pi, var_from_influence, var_ps)
from elvol.ps_fit import default_params, instrument_matrix
from elvol.smoothing import SmoothedPsModel
from elvol.variance import (alpha_sensitivity, export_influence, gamma_hat, kappa1_hat, kappa2_hat,
                            normal_quantile)


@pytest.fixture(scope="module")
def frame_models():
    f = generate_population(ScenarioConfig("M2", n_units=3000, seed=11), 2)
    return f, fit_models(f)


def test_var_from_influence_examples():
    assert var_from_influence(np.full(7, 3.2)) == pytest.approx(0.0, abs=1e-28)
    assert var_from_influence([0.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        var_from_influence([1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e3, 1e3)),
       st.floats(-1e3, 1e3), st.floats(-10, 10))
def test_var_from_influence_shift_and_scale(eta, shift, c):
    v = var_from_influence(eta)
    assert var_from_influence(eta + shift) == pytest.approx(v, rel=1e-6, abs=1e-6)
    assert var_from_influence(c * eta) == pytest.approx(c * c * v, rel=1e-6, abs=1e-6)


def test_influence_vectors_cover_all_units(frame_models):
    f, m = frame_models
    for _, iv in (var_ps(f, m.ps), var_el(f, m.ps, m.smoothed, EstimatorKind.EL1),
                  var_el(f, m.ps, m.smoothed, EstimatorKind.EL2), var_el_known_pi(f)):
        assert iv.eta.shape == (f.n_units,)
        assert np.all(np.isfinite(iv.eta))


def test_linearizations_reproduce_point_estimates(frame_models):
    f, m = frame_models
    t = theta_ps(f, m.ps)
    v, iv = var_ps(f, m.ps)
    assert iv.eta.mean() == pytest.approx(t, abs=1e-6)
    for kind in (EstimatorKind.EL1, EstimatorKind.EL2):
        t, _ = theta_el(f, m.ps, m.smoothed, kind)
        v, iv = var_el(f, m.ps, m.smoothed, kind, theta=t)
        assert abs(iv.eta.mean() - t) < 0.05 * np.sqrt(v)
    t, _ = theta_el_known_pi(f)
    v, iv = var_el_known_pi(f, theta=t)
    assert abs(iv.eta.mean() - t) < 0.1 * np.sqrt(v)


def test_ps_exact_fit_case():
    # y = b'c exactly and b = h (MAR model on both x): residuals vanish
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400, 2))
    c = np.array([0.5, -1.0, 2.0])
    y = c[0] + x @ c[1:]
    delta = (rng.random(400) < 0.6).astype(int)
    f = PopulationFrame(x, delta, np.where(delta == 1, y, np.nan))
    from elvol import fit_mar_logistic

    ps = fit_mar_logistic(f)  # h = (1, x1, x2) = b
    np.testing.assert_allclose(gamma_hat(f, ps), c, atol=1e-9)
    v, iv = var_ps(f, ps)
    np.testing.assert_allclose(iv.eta, instrument_matrix(f.x, ps) @ c, atol=1e-9)


def test_kappa_examples(frame_models):
    f, m = frame_models
    assert np.all(kappa1_hat(f, m.ps, m.smoothed, np.zeros(3)) == 0)
    g = np.array([0.3, -1.2, 0.7])
    np.testing.assert_allclose(kappa1_hat(f, m.ps, m.smoothed, -g), -kappa1_hat(f, m.ps, m.smoothed, g))
    b2 = np.array([0.4, 0.1])
    k = kappa2_hat(f, m.ps, b2)
    assert np.linalg.norm(k) > 0
    # kappa2 is affine in the residuals y - x'beta2
    b2b = np.array([-0.7, 0.9])
    mid = kappa2_hat(f, m.ps, (b2 + b2b) / 2)
    np.testing.assert_allclose(k + kappa2_hat(f, m.ps, b2b), 2 * mid, rtol=1e-10)


def test_kappa2_zero_when_y_is_linear_in_x():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(300, 2))
    y = x @ np.array([1.5, -0.5])
    delta = (rng.random(300) < 0.5).astype(int)
    f = PopulationFrame(x, delta, np.where(delta == 1, y, np.nan))
    ps = default_params(2, [0.1, 0.2, 0.3])
    np.testing.assert_allclose(kappa2_hat(f, ps, [1.5, -0.5]), 0.0, atol=1e-10)


def test_literal_forms_differ_only_by_documented_terms(frame_models):
    f, m = frame_models
    t, _ = theta_el(f, m.ps, m.smoothed, EstimatorKind.EL2)
    v_full, _ = var_el(f, m.ps, m.smoothed, EstimatorKind.EL2, theta=t)
    v_lit, _ = var_el(f, m.ps, m.smoothed, EstimatorKind.EL2, literal=True)
    assert v_full > v_lit > 0
    # the literal known-pi form carries the outcome level into the variance
    shifted = PopulationFrame(f.x, f.delta, f.y + 5.0, oracle=f.oracle)
    vk, _ = var_el_known_pi(f)
    vk_lit_shift, _ = var_el_known_pi(shifted, literal=True)
    assert vk_lit_shift > 5 * vk


def test_alpha_sensitivity_shapes(frame_models):
    f, m = frame_models
    a, g_extra = alpha_sensitivity(f, m.smoothed)
    assert a.shape == (3,) and g_extra.shape == (3,)
    assert np.all(np.isfinite(a))


def test_confidence_interval():
    lo, hi = confidence_interval(1.0, 0.04)
    assert (lo, hi) == pytest.approx((1.0 - 1.959963984540054 * 0.2, 1.0 + 1.959963984540054 * 0.2))
    assert confidence_interval(1.0, 0.04, 0.0) == (1.0, 1.0)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    with pytest.raises(ValueError):
        confidence_interval(0.0, -1.0)
    with pytest.raises(ValueError):
        confidence_interval(0.0, 1.0, 1.0)


def test_export_influence(tmp_path, frame_models):
    f, m = frame_models
    _, iv = var_ps(f, m.ps)
    path = tmp_path / "eta.csv"
    export_influence(iv, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["unit", "eta"] and len(rows) == f.n_units + 1
    np.testing.assert_array_equal([float(r[1]) for r in rows[1:]], iv.eta)
