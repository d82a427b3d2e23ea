"""Christoffel symbols and distributional curvature pairings."""

import numpy as np
import pytest

from lorentzlab.chart import ChartWindow, TestData, WeightField, catalog
from lorentzlab.connection import (bakry_emery_pair, christoffel,
                                   energy_condition_probe, hessian_pair,
                                   ricci_pair)
from lorentzlab.errors import ConventionViolation, SupportLeak
from lorentzlab.fields import quadrature_with_error

import oracles


def weighted_mass(field, mu):
    win = field.window
    pts = win.grid_points()
    flat = pts.reshape(-1, win.dim)
    sqrtg = np.sqrt(np.abs(np.linalg.det(field.eval(flat, check=False))))
    integrand = (mu.density(flat) * sqrtg).reshape(win.grid_shape)
    mass, _ = quadrature_with_error(integrand, win.spacing)
    return mass


# ---------------------------------------------------------------------------
# Christoffel symbols
# ---------------------------------------------------------------------------

def test_christoffel_minkowski_zero():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 17))
    cv = christoffel(entry.field, [0.3, 0.1])
    np.testing.assert_array_equal(cv.gamma, np.zeros((2, 2, 2)))


def test_christoffel_flrw_exp_values():
    win = ChartWindow(2, np.array([[-0.2, 1.0], [-1.0, 1.0]]), (17, 17))
    entry = catalog("flrw-exp", win)
    cv0 = christoffel(entry.field, [0.0, 0.0])
    assert cv0.gamma[0, 1, 1] == pytest.approx(1.0, abs=1e-14)
    assert cv0.gamma[1, 0, 1] == pytest.approx(1.0, abs=1e-14)
    cv2 = christoffel(entry.field, [np.log(2.0), 0.3])
    assert cv2.gamma[0, 1, 1] == pytest.approx(4.0, abs=1e-13)
    assert cv2.gamma[1, 0, 1] == pytest.approx(1.0, abs=1e-14)
    # everything else vanishes
    expect = np.zeros((2, 2, 2))
    expect[0, 1, 1] = 4.0
    expect[1, 0, 1] = expect[1, 1, 0] = 1.0
    np.testing.assert_allclose(cv2.gamma, expect, atol=1e-13)


@pytest.mark.parametrize("name", ["flrw-cosh", "product-hyperbolic"])
def test_christoffel_against_symbolic_oracle(name):
    win = ChartWindow.cube(2, 0.7, 17)
    entry = catalog(name, win)
    rng = np.random.default_rng(11)
    pts = rng.uniform(-0.6, 0.6, size=(6, 2))
    expected = oracles.christoffel_values(name, 2, pts)
    got = np.stack([christoffel(entry.field, p).gamma for p in pts])
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12)


def test_christoffel_symmetry_exact():
    win = ChartWindow.cube(2, 0.7, 17)
    for name in ("product-hyperbolic", "c1-perturbed", "flrw-exp"):
        entry = catalog(name, win)
        rng = np.random.default_rng(3)
        for p in rng.uniform(-0.6, 0.6, size=(5, 2)):
            gamma = christoffel(entry.field, p).gamma
            np.testing.assert_array_equal(gamma, np.swapaxes(gamma, 1, 2))


def test_catalog_classical_ricci_matches_sympy():
    for name in ("flrw-exp", "flrw-cosh", "product-hyperbolic"):
        n = 3 if name == "product-hyperbolic" else 2
        win = ChartWindow.cube(n, 0.6, 9)
        entry = catalog(name, win)
        rng = np.random.default_rng(5)
        pts = rng.uniform(-0.5, 0.5, size=(6, n))
        np.testing.assert_allclose(entry.classical_ricci(pts),
                                   oracles.ricci_values(name, n, pts),
                                   rtol=1e-9, atol=1e-10)


# ---------------------------------------------------------------------------
# Ricci pairing
# ---------------------------------------------------------------------------

def test_ricci_pair_flat_is_zero():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 65))
    X = TestData.constant_vector([1.0, 0.2])
    mu = TestData.bump([0.0, 0.0], 0.5)
    pairing = ricci_pair(entry.field, X, mu)
    assert abs(pairing.value) <= 1e-8


def test_ricci_pair_flrw_comoving():
    win = ChartWindow.cube(2, 1.0, 129)
    entry = catalog("flrw-exp", win)
    X = TestData.constant_vector([1.0, 0.0])
    mu = TestData.bump([0.0, 0.0], 0.5)
    pairing = ricci_pair(entry.field, X, mu)
    mass = weighted_mass(entry.field, mu)
    # Ric(dt, dt) = -(n-1) a''/a = -1 for the exponential scale factor
    assert pairing.value == pytest.approx(-mass, abs=5 * pairing.quadrature_error + 1e-6)


@pytest.mark.parametrize("name,X", [
    ("flrw-exp", [1.0, 0.3]),
    ("flrw-cosh", [1.0, -0.4]),
    ("product-hyperbolic", [1.0, 0.25]),
])
def test_weak_pairing_matches_classical_quadrature(name, X):
    win = ChartWindow.cube(2, 0.9, 129)
    entry = catalog(name, win)
    Xd = TestData.constant_vector(X)
    mu = TestData.bump([0.05, -0.1], 0.45)
    pairing = ricci_pair(entry.field, Xd, mu)

    pts = win.grid_points()
    flat = pts.reshape(-1, 2)
    ric = entry.classical_ricci(flat)
    sqrtg = np.sqrt(np.abs(np.linalg.det(entry.field.eval(flat, check=False))))
    Xv = Xd.vector_field(flat)
    integrand = (np.einsum("...ij,...i,...j->...", ric, Xv, Xv)
                 * mu.density(flat) * sqrtg).reshape(win.grid_shape)
    classical, cerr = quadrature_with_error(integrand, win.spacing)
    assert abs(pairing.value - classical) <= \
        5 * (pairing.quadrature_error + cerr)


def test_ricci_pair_scalings_exact():
    win = ChartWindow.cube(2, 0.9, 65)
    entry = catalog("flrw-cosh", win)
    mu = TestData.bump([0.0, 0.0], 0.4)
    X = TestData.constant_vector([1.0, 0.25])
    X2 = TestData.constant_vector([2.0, 0.5])
    base = ricci_pair(entry.field, X, mu).value
    assert ricci_pair(entry.field, X2, mu).value == 4.0 * base
    mu2 = TestData.bump([0.0, 0.0], 0.4, mass=2.0)
    assert ricci_pair(entry.field, X, mu2).value == pytest.approx(
        2.0 * base, rel=1e-13)


def test_support_leak_detected():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 33))
    X = TestData.constant_vector([1.0, 0.0])
    mu = TestData.bump([0.0, 0.0], 0.999)
    with pytest.raises(SupportLeak):
        ricci_pair(entry.field, X, mu)


# ---------------------------------------------------------------------------
# Hessian pairing
# ---------------------------------------------------------------------------

def flat_with_weight(N=4.0, half=1.0, pts=65):
    win = ChartWindow.cube(2, half, pts)
    entry = catalog("weighted-product", win, N=N)
    return entry


def test_hessian_pair_linear_weight_vanishes():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 65))

    def V(x):
        return 0.3 * np.asarray(x, float)[..., 0] - np.asarray(x, float)[..., 1]

    def dV(x):
        out = np.zeros(np.asarray(x).shape, float)
        out[..., 0] = 0.3
        out[..., 1] = -1.0
        return out

    w = WeightField(V, dV, 4.0, 2)
    X = TestData.constant_vector([1.0, 0.4])
    mu = TestData.bump([0.0, 0.0], 0.5)
    pairing = hessian_pair(entry.field, w, X, mu)
    assert abs(pairing.value) <= 10 * pairing.quadrature_error + 1e-10


def test_hessian_pair_square_weight():
    entry = flat_with_weight()
    X = TestData.constant_vector([0.0, 1.0])
    mu = TestData.bump([0.0, 0.0], 0.5)
    pairing = hessian_pair(entry.field, entry.weight, X, mu)
    # Hess(y^2) = 2 dy (x) dy on the flat product
    assert pairing.value == pytest.approx(2.0, abs=1e-3)
    Xt = TestData.constant_vector([1.0, 0.0])
    pt = hessian_pair(entry.field, entry.weight, Xt, mu)
    assert abs(pt.value) <= 5 * pt.quadrature_error + 1e-10


# ---------------------------------------------------------------------------
# Bakry-Emery pairing
# ---------------------------------------------------------------------------

def test_bakry_emery_flat_zero_weight():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 65))
    X = TestData.constant_vector([1.0, 0.1])
    mu = TestData.bump([0.0, 0.0], 0.5)
    w = WeightField.zero(2, synthetic_dim=5.0)
    pairing = bakry_emery_pair(entry.field, w, X, mu)
    assert abs(pairing.value) <= 1e-10


def test_bakry_emery_square_weight_closed_form():
    win = ChartWindow(2, np.array([[-0.6, 0.6], [-3.0, 3.0]]), (33, 161))
    entry = catalog("weighted-product", win, N=4)
    X = TestData.constant_vector([0.0, 1.0])
    for y0, expected in [(0.0, 2.0), (2.0, -6.0)]:
        mu = TestData.bump([0.0, y0], 0.25)
        pairing = bakry_emery_pair(entry.field, entry.weight, X, mu)
        # Hess V (X,X) = 2, (dV(X))^2/(N-n) = 2 y^2; bump-averaged
        assert pairing.value == pytest.approx(expected, abs=0.05)


def test_bakry_emery_convention_violation():
    entry = flat_with_weight(N=4.0)
    X = TestData.constant_vector([0.0, 1.0])
    mu = TestData.bump([0.0, 0.0], 0.4)
    with pytest.raises(ConventionViolation):
        bakry_emery_pair(entry.field, entry.weight, X, mu, N=2.0)


def test_bakry_emery_reproducible_bit_identical():
    entry = flat_with_weight()
    X = TestData.constant_vector([0.0, 1.0])
    mu = TestData.bump([0.1, 0.2], 0.4)
    a = bakry_emery_pair(entry.field, entry.weight, X, mu).value
    b = bakry_emery_pair(entry.field, entry.weight, X, mu).value
    assert a == b


# ---------------------------------------------------------------------------
# Energy-condition probe
# ---------------------------------------------------------------------------

def test_energy_probe_minkowski_holds():
    entry = catalog("minkowski", ChartWindow.cube(2, 1.0, 65))
    w = WeightField.zero(2)
    report = energy_condition_probe(entry.field, w, 2.0,
                                    np.array([[-0.5, 0.5], [-0.5, 0.5]]), 0.0)
    assert report["holds"]
    assert abs(report["min_pairing"]) <= report["tolerance"]


def test_energy_probe_weighted_flat_certifies_and_violates():
    win = ChartWindow(2, np.array([[-0.6, 0.6], [-3.0, 3.0]]), (33, 161))
    entry = catalog("weighted-product", win, N=4)
    inner = np.array([[-0.3, 0.3], [-0.5, 0.5]])
    rep = energy_condition_probe(entry.field, entry.weight, 4.0, inner, 0.0)
    assert rep["holds"]

    outer = np.array([[-0.3, 0.3], [1.5, 2.5]])
    rep2 = energy_condition_probe(entry.field, entry.weight, 4.0, outer, 0.0)
    assert not rep2["holds"]
    y_c = rep2["argmin"]["center"][1]
    assert 1.5 <= y_c <= 2.5
    closed_form = 2.0 - 2.0 * y_c ** 2
    assert rep2["min_pairing"] < 0
    assert abs(rep2["min_pairing"] - closed_form) <= 0.2 * abs(closed_form)


def test_energy_probe_flrw_exp_violation_at_zero_rapidity():
    entry = catalog("flrw-exp", ChartWindow.cube(2, 1.0, 65))
    w = WeightField.zero(2)
    report = energy_condition_probe(entry.field, w, 2.0,
                                    np.array([[-0.4, 0.4], [-0.4, 0.4]]), 0.0)
    # Ric(e0, e0) = -1 for every unit timelike e0 in this 2d geometry
    assert not report["holds"]
    assert report["min_pairing"] == pytest.approx(-1.0, abs=0.05)
