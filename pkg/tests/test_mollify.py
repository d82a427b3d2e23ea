"""Causality-controlled smoothing and curvature degradation."""

import numpy as np
import pytest

from lorentzlab.chart import ChartWindow, WeightField, catalog
from lorentzlab.curvature import classical_ricci
from lorentzlab.errors import CollarTooThin
from lorentzlab.mollify import Mollifier, curvature_degradation, good_approximation

import oracles


def test_mollifier_unit_mass_and_compact_support():
    m = Mollifier(2, 0.1)
    assert m.mass_defect <= 1e-6        # raw quadrature defect, pre-normalization
    assert abs(np.sum(m.weights) - 1.0) <= 1e-12
    carried = np.linalg.norm(m.nodes[m.weights > 0], axis=-1)
    assert np.all(carried <= 0.1 + 1e-15)


def test_classical_ricci_helper_matches_sympy():
    win = ChartWindow.cube(2, 0.8, 9)
    entry = catalog("flrw-cosh", win)
    pts = np.array([[0.1, 0.2], [-0.3, 0.5], [0.4, -0.6]])
    g = entry.field.eval(pts)
    dg = entry.field.deriv(pts)
    h = 1e-5
    d2g = np.empty(pts.shape[:-1] + (2, 2, 2, 2))
    for l in range(2):
        e = np.zeros(2)
        e[l] = h
        d2g[:, l] = (entry.field.deriv(pts + e, check=False)
                     - entry.field.deriv(pts - e, check=False)) / (2 * h)
    got = classical_ricci(g, dg, d2g)
    np.testing.assert_allclose(got, oracles.ricci_values("flrw-cosh", 2, pts),
                               rtol=1e-6, atol=1e-7)


def test_minkowski_convolution_exact_and_margins_positive():
    win = ChartWindow.cube(2, 1.0, 17)
    entry = catalog("minkowski", win)
    ga = good_approximation(entry.field, entry.weight, 0.1)
    pts = np.array([[0.0, 0.0], [0.3, -0.5], [-0.6, 0.6]])
    np.testing.assert_allclose(ga.convolved.eval(pts, check=False),
                               entry.field.eval(pts), atol=1e-13)
    # corrected metric subtracts a tiny time-covector square
    diff = entry.field.eval(pts) - ga.smoothed.eval(pts, check=False)
    expect = np.zeros((3, 2, 2))
    expect[:, 0, 0] = ga.correction
    np.testing.assert_allclose(diff, expect, atol=1e-13)
    assert ga.correction > 0
    assert ga.margin_report["min_margin"] > 0


@pytest.mark.parametrize("name", ["flrw-exp", "c1-perturbed"])
def test_c1_error_decreases_and_cones_narrow(name):
    win = ChartWindow.cube(2, 1.0, 17)
    entry = catalog(name, win)
    errors = []
    for eps in (0.1, 0.05, 0.025):
        ga = good_approximation(entry.field, entry.weight, eps)
        assert ga.margin_report["min_margin"] > 0.0
        errors.append(ga.c1_error["sup_metric"] + ga.c1_error["sup_metric_deriv"])
    assert errors[1] <= 2.0 * errors[0]
    assert errors[2] <= 2.0 * errors[1]
    assert errors[2] < errors[0]


def test_c1_second_derivative_blowup_reported():
    win = ChartWindow.cube(2, 1.0, 17)
    entry = catalog("c1-perturbed", win, alpha=0.5, amplitude=0.2)
    norms = []
    for eps in (0.2, 0.1, 0.05):
        ga = good_approximation(entry.field, entry.weight, eps)
        pts = np.array([[0.0, 0.05], [0.05, 0.0], [0.02, -0.03]])
        d2 = ga.second_deriv(pts)
        norms.append(float(np.max(np.abs(d2))))
    # second derivatives of the smoothing grow as the kink is resolved
    assert norms[2] > norms[0]


def test_collar_too_thin():
    win = ChartWindow.cube(2, 0.3, 9)
    entry = catalog("minkowski", win)
    with pytest.raises(CollarTooThin):
        good_approximation(entry.field, entry.weight, 0.4)


def test_degradation_minkowski_zero():
    win = ChartWindow.cube(2, 1.0, 9)
    entry = catalog("minkowski", win)
    ga = good_approximation(entry.field, entry.weight, 0.1)
    rep = curvature_degradation(ga, 2.0, 0.0,
                                np.array([[-0.5, 0.5], [-0.5, 0.5]]))
    assert rep["delta"] <= 1e-6


def test_degradation_flrw_cosh_converges():
    win = ChartWindow.cube(2, 1.2, 9)
    entry = catalog("flrw-cosh", win)
    region = np.array([[-0.4, 0.4], [-0.4, 0.4]])
    deltas = []
    for eps in (0.2, 0.1, 0.05):
        ga = good_approximation(entry.field, entry.weight, eps)
        # Ric = -(n-1) g on this geometry, so K = -(n-1) is the tight bound
        rep = curvature_degradation(ga, 2.0, -1.0, region)
        deltas.append(rep["delta"])
    assert deltas[2] <= deltas[0]
    assert deltas[2] <= 0.05


def test_degradation_weighted_flat_converges():
    win = ChartWindow(2, np.array([[-0.8, 0.8], [-0.8, 0.8]]), (9, 9))
    entry = catalog("weighted-product", win, N=4)
    region = np.array([[-0.4, 0.4], [-0.45, 0.45]])
    deltas = []
    for eps in (0.2, 0.1, 0.05):
        ga = good_approximation(entry.field, entry.weight, eps)
        rep = curvature_degradation(ga, 4.0, 0.0, region)
        deltas.append(rep["delta"])
    # the energy condition holds on |y| <= 0.5, so the deficit decays
    assert deltas[2] <= deltas[0] + 1e-9
    assert deltas[2] <= 0.05


def test_weight_convolution():
    win = ChartWindow(2, np.array([[-0.8, 0.8], [-2.0, 2.0]]), (9, 17))
    entry = catalog("weighted-product", win, N=4)
    ga = good_approximation(entry.field, entry.weight, 0.05)
    x = np.array([[0.0, 1.0]])
    # smoothing a quadratic shifts it by the kernel second moment, O(eps^2)
    assert ga.weight_eps.eval(x)[0] == pytest.approx(1.0, abs=5e-3)
    np.testing.assert_allclose(ga.weight_eps.deriv(x)[0], [0.0, 2.0],
                               atol=5e-3)
