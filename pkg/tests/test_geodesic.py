"""Geodesic integration, maximizer checks, and shooting."""

import numpy as np
import pytest

from lorentzlab.chart import ChartWindow, catalog
from lorentzlab.errors import NotCausallyRelated, StepTooLarge
from lorentzlab.geodesic import (CausalCurve, compactness_experiment,
                                 integrate_geodesic, is_maximizer, shoot)


def mink(half=2.5, pts=17):
    return catalog("minkowski", ChartWindow.cube(2, half, pts))


def test_minkowski_straight_line():
    entry = mink()
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.5], 2.0, 1e-2)
    np.testing.assert_allclose(c.endpoint, [2.0, 1.0], atol=1e-12)
    assert c.character == "future-timelike"
    assert c.norm_drift <= 1e-14
    assert not c.exited


def test_flrw_comoving_observer_exact():
    win = ChartWindow(2, np.array([[-0.1, 1.2], [-1.0, 1.0]]), (17, 17))
    entry = catalog("flrw-exp", win)
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.0], 1.0, 1e-2)
    np.testing.assert_allclose(c.points[:, 1], 0.0, atol=1e-14)
    np.testing.assert_allclose(c.points[-1], [1.0, 0.0], atol=1e-12)


def test_null_line_keeps_character():
    entry = mink()
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 1.0], 2.0, 1e-2)
    assert c.character == "future-null"
    assert c.norm_drift <= 1e-14
    np.testing.assert_allclose(c.endpoint, [2.0, 2.0], atol=1e-12)


def test_exit_window_marker():
    entry = mink(half=0.5)
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.0], 2.0, 1e-2)
    assert c.exited
    assert c.exit_time == pytest.approx(0.5, abs=0.02)
    assert np.all(c.points[:, 0] <= 0.5 + 1e-12)


def test_norm_drift_rk4_order_on_smooth_metric():
    win = ChartWindow.cube(2, 2.0, 9)
    entry = catalog("flrw-cosh", win)
    drifts = []
    steps = [4e-2, 2e-2, 1e-2]
    for h in steps:
        c = integrate_geodesic(entry.field, [0.0, 0.0], [1.2, 0.7], 1.0, h)
        drifts.append(max(c.norm_drift, 1e-17))
    slopes = np.diff(np.log(drifts)) / np.diff(np.log(steps))
    assert np.mean(slopes) >= 3.5


def test_norm_drift_order_on_c1_metric():
    win = ChartWindow.cube(2, 2.0, 9)
    entry = catalog("c1-perturbed", win, alpha=0.4, amplitude=0.3)
    drifts = []
    steps = [4e-2, 2e-2, 1e-2]
    for h in steps:
        c = integrate_geodesic(entry.field, [-0.5, -0.45], [1.0, 0.9], 1.0, h,
                               drift_guard=np.inf)
        drifts.append(max(c.norm_drift, 1e-17))
    slopes = np.diff(np.log(drifts)) / np.diff(np.log(steps))
    assert np.mean(slopes) >= 0.9


def test_step_too_large_raises():
    win = ChartWindow.cube(2, 2.0, 9)
    entry = catalog("c1-perturbed", win, alpha=0.4, amplitude=0.3)
    with pytest.raises(StepTooLarge):
        integrate_geodesic(entry.field, [-0.5, -0.45], [1.0, 0.9], 1.0, 4e-2)


def test_velocities_consistent_with_point_differences():
    entry = mink()
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.3], 1.0, 1e-2)
    fd = np.gradient(c.points, c.params, axis=0)
    assert np.max(np.abs(fd - c.velocities)) <= 5e-4  # O(step^2) interior


# ---------------------------------------------------------------------------
# Maximizer certification
# ---------------------------------------------------------------------------

def test_straight_segment_is_maximizer():
    entry = mink()
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.25], 2.0, 1e-2)
    ok, violations = is_maximizer(entry.field, c, samples=4, tol=1e-6)
    assert ok, violations


def test_broken_curve_fails_maximizer():
    entry = mink()
    pts = np.array([[0.0, 0.0], [1.0, 0.9], [2.0, 0.0]])
    vel = np.array([[1.0, 0.9], [1.0, 0.0], [1.0, -0.9]])
    c = CausalCurve(np.array([0.0, 1.0, 2.0]), pts, vel, "future-timelike", 0.0)
    ok, violations = is_maximizer(entry.field, c, samples=3, tol=1e-3)
    assert not ok
    # corner cut: l(ends) = 2 against two legs of sqrt(1 - 0.81) each
    gap = violations[0][3]
    assert gap == pytest.approx(2.0 - 2.0 * np.sqrt(0.19), abs=1e-5)


def test_flrw_comoving_is_maximizer():
    win = ChartWindow(2, np.array([[-0.1, 1.2], [-1.0, 1.0]]), (17, 17))
    entry = catalog("flrw-exp", win)
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.0], 1.0, 1e-2)
    ok, violations = is_maximizer(entry.field, c, samples=4, tol=1e-5)
    assert ok, violations


# ---------------------------------------------------------------------------
# Shooting
# ---------------------------------------------------------------------------

def test_shoot_minkowski_closed_form():
    entry = mink()
    c = shoot(entry.field, [0.0, 0.0], [2.0, 1.0])
    assert c.meta["proper_time"] == pytest.approx(np.sqrt(3.0), abs=1e-9)
    assert c.meta["endpoint_error"] <= 1e-9
    assert c.maximizing


def test_shoot_spacelike_pair_raises():
    entry = mink()
    with pytest.raises(NotCausallyRelated):
        shoot(entry.field, [0.0, 0.0], [0.0, 1.0])


def test_shoot_product_hyperbolic_vertical():
    win = ChartWindow(2, np.array([[-0.5, 2.5], [-0.8, 0.8]]), (17, 17))
    entry = catalog("product-hyperbolic", win)
    c = shoot(entry.field, [0.0, 0.3], [2.0, 0.3])
    assert c.meta["proper_time"] == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(c.points[:, 1], 0.3, atol=1e-9)


def test_shoot_recovers_initial_velocity_round_trip():
    win = ChartWindow.cube(2, 2.0, 9)
    entry = catalog("flrw-cosh", win)
    v0 = np.array([1.0, 0.35])
    c = integrate_geodesic(entry.field, [0.0, 0.1], v0, 1.0, 1e-3)
    back = shoot(entry.field, [0.0, 0.1], c.endpoint, tol=1e-10,
                 classify_maximizing=False)
    np.testing.assert_allclose(back.velocities[0], v0, atol=1e-6)


# ---------------------------------------------------------------------------
# Compactness experiments
# ---------------------------------------------------------------------------

def test_compactness_minkowski_cone_fan():
    entry = mink(half=3.0)
    seeds = []
    for s in np.linspace(-0.6, 0.6, 7):
        v = np.array([1.0, s]) / np.sqrt(1.0 - s ** 2)
        seeds.append((np.zeros(2), v))
    rep = compactness_experiment(entry.field, seeds, 1.0, 1e-2,
                                 cluster_tol=1e-6)
    assert rep["n_clusters"] == len(seeds)
    assert rep["uniform_velocity_bound"] < 3.0
    assert rep["uniform_acceleration_bound"] <= 1e-12


def test_compactness_maximizer_family_continuity():
    entry = mink(half=3.0)
    # maximizers (0, x0) -> (2, 0): explicit straight lines
    xs = np.linspace(-0.5, 0.5, 11)
    seeds = []
    for x0 in xs:
        chord = np.array([2.0, -x0])
        seeds.append((np.array([0.0, x0]), chord / 2.0))
    rep = compactness_experiment(entry.field, seeds, 2.0, 1e-2,
                                 cluster_tol=0.25)
    # velocity gap between neighbours is |dx0|*(1 + 1/2) at matched times
    expected = (xs[1] - xs[0]) * 1.5
    assert rep["successive_c1"][0] == pytest.approx(expected, rel=1e-6)
    assert rep["cauchy_chain"]
    assert rep["n_clusters"] == 1


def test_compactness_c1_spread_report():
    win = ChartWindow.cube(2, 2.0, 9)
    entry = catalog("c1-perturbed", win, alpha=0.3, amplitude=0.3)
    rng = np.random.default_rng(0)
    base_v = np.array([1.0, 0.6])
    seeds = [(np.array([-0.5, -0.3]), base_v + rng.normal(scale=1e-9, size=2))
             for _ in range(5)]
    rep = compactness_experiment(entry.field, seeds, 1.0, 5e-3,
                                 cluster_tol=1e-3)
    assert rep["n_curves"] == 5
    assert rep["max_pairwise_c1"] >= 0.0  # spread recorded, report-only


def test_curve_csv_dump(tmp_path):
    entry = mink()
    c = integrate_geodesic(entry.field, [0.0, 0.0], [1.0, 0.5], 1.0, 0.1)
    path = tmp_path / "curve.csv"
    c.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x0,x1,v0,v1"
