import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elvol import (ColumnMap, DegenerateFrameError, InputError, PopulationFrame, Scenario,
                   ScenarioConfig, generate_population, load_population, save_population)
from elvol.population import outcome_mean


def test_generate_shapes_and_invariants(m1_frame):
    f = m1_frame
    assert f.x.shape == (2000, 2)
    assert np.all(np.isnan(f.y[~f.resp]))
    assert np.all(np.isfinite(f.y_s))
    assert 0 < f.n_sample < f.n_units
    np.testing.assert_array_equal(f.y_s, f.oracle.y_full[f.resp])


def test_generate_is_deterministic_per_replicate():
    cfg = ScenarioConfig("M2", n_units=300, seed=5)
    a, b = generate_population(cfg, 3), generate_population(cfg, 3)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.delta, b.delta)
    c = generate_population(cfg, 4)
    assert not np.array_equal(a.x, c.x)


def test_true_pi_matches_model(m1_frame):
    f = m1_frame
    lin = -2.0 + f.x[:, 0] + 0.5 * f.oracle.y_full
    np.testing.assert_allclose(f.oracle.true_pi, 1 / (1 + np.exp(-lin)), rtol=1e-14)


def test_outcome_means_have_zero_expectation():
    # E(y) = 0 in both scenarios when x1, x2 ~ N(2, 1)
    rng = np.random.default_rng(0)
    x = rng.normal(2, 1, size=(400_000, 2))
    for sc in Scenario:
        assert abs(outcome_mean(sc, x[:, 0], x[:, 1]).mean()) < 0.01


def test_frame_is_read_only(m1_frame):
    with pytest.raises(ValueError):
        m1_frame.x[0, 0] = 1.0


def test_frame_rejects_bad_input():
    with pytest.raises(InputError):
        PopulationFrame(np.zeros((3, 1)), [1, 0, 2], [1.0, 0, 0])
    with pytest.raises(InputError, match="unit 1"):
        PopulationFrame(np.zeros((3, 1)), [1, 1, 0], [1.0, np.nan, 0])


def test_degenerate_frame():
    f = PopulationFrame(np.zeros((3, 1)), [1, 1, 1], [1.0, 2.0, 3.0])
    assert f.is_degenerate
    with pytest.raises(DegenerateFrameError):
        f.require_estimable()


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig("M1", n_units=5)
    assert ScenarioConfig("m2").scenario is Scenario.M2


def test_csv_round_trip(tmp_path, m2_frame):
    path = tmp_path / "f.csv"
    save_population(m2_frame, path)
    g = load_population(path)
    np.testing.assert_array_equal(g.x, m2_frame.x)
    np.testing.assert_array_equal(g.delta, m2_frame.delta)
    np.testing.assert_array_equal(g.y_s, m2_frame.y_s)
    assert g.x_names == ("x1", "x2")


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.booleans()), min_size=1, max_size=25))
def test_csv_round_trip_property(tmp_path_factory, rows):
    x = np.array([[r[0]] for r in rows])
    d = np.array([int(r[2]) for r in rows])
    y = np.where(d == 1, [r[1] for r in rows], np.nan)
    f = PopulationFrame(x, d, y, ("a",))
    path = tmp_path_factory.mktemp("rt") / "f.csv"
    save_population(f, path)
    g = load_population(path)
    np.testing.assert_array_equal(g.x, f.x)
    np.testing.assert_array_equal(g.y_s, f.y_s)


def _write(tmp_path, text):
    p = tmp_path / "in.csv"
    p.write_text(text)
    return p


def test_load_reports_row_numbers(tmp_path):
    p = _write(tmp_path, "x1,delta,y\n1.0,1,2.0\n2.0,1,\n")
    with pytest.raises(InputError, match="row 3"):
        load_population(p)
    p = _write(tmp_path, "x1,delta,y\n1.0,2,2.0\n")
    with pytest.raises(InputError, match="row 2"):
        load_population(p)
    p = _write(tmp_path, "x1,delta,y\nabc,1,2.0\n")
    with pytest.raises(InputError, match="row 2"):
        load_population(p)


def test_load_discards_y_on_unselected_rows(tmp_path):
    p = _write(tmp_path, "x1,delta,y\n1.0,1,2.0\n2.0,0,99\n")
    f = load_population(p)
    assert math.isnan(f.y[1])


def test_load_column_map(tmp_path):
    p = _write(tmp_path, "id,a,b,sel,out\n1,0.5,1.5,1,3\n2,0.1,0.2,0,\n")
    f = load_population(p, ColumnMap(x=["a", "b"], delta="sel", y="out"))
    assert f.x_names == ("a", "b")
    np.testing.assert_array_equal(f.x, [[0.5, 1.5], [0.1, 0.2]])


def test_load_missing_column(tmp_path):
    with pytest.raises(InputError, match="delta"):
        load_population(_write(tmp_path, "x1,y\n1,2\n"))
