"""Busemann fields, flow maps, cross-sections, and product verification."""

import numpy as np
import pytest

from lorentzlab.busemann import TimelikeRay
from lorentzlab.chart import ChartWindow, WeightField, catalog
from lorentzlab.errors import LevelSetNotGraph
from lorentzlab.fields import ScalarField
from lorentzlab.splitting import (BusemannField, busemann_field,
                                  extract_cross_section, flow_map,
                                  local_structure_check, verify_product)

SCHEDULE = (50.0, 100.0, 200.0)


def split_window(ty=0.8, yy=0.4, pts=(17, 17)):
    return ChartWindow(2, np.array([[-ty, ty], [-yy, yy]]), pts)


@pytest.fixture(scope="module")
def mink_bf():
    win = split_window()
    entry = catalog("minkowski", win)
    bf = busemann_field(entry.field, TimelikeRay.vertical(2), schedule=SCHEDULE)
    return entry, bf


def test_busemann_field_minkowski_is_time_coordinate(mink_bf):
    entry, bf = mink_bf
    pts = bf.window.grid_points()
    err = np.abs(bf.bplus.values - pts[..., 0])
    assert np.max(err) <= 1e-3
    assert np.max(np.abs(bf.bminus.values - pts[..., 0])) <= 1e-3
    # the bi-Busemann gap is nonnegative up to tolerance and tiny here
    assert np.min(bf.gap) >= -1e-6
    assert np.max(np.abs(bf.gap)) <= 1e-5


def test_busemann_field_product_hyperbolic():
    win = ChartWindow(2, np.array([[-0.5, 0.5], [-0.35, 0.35]]), (13, 13))
    entry = catalog("product-hyperbolic", win)
    bf = busemann_field(entry.field, TimelikeRay.from_catalog(entry),
                        schedule=SCHEDULE)
    pts = win.grid_points()
    assert np.max(np.abs(bf.bplus.values - pts[..., 0])) <= 1e-3
    assert np.max(np.abs(bf.gap)) <= 1e-5


def test_busemann_field_boosted_line():
    alpha = 0.4
    win = ChartWindow(2, np.array([[-0.5, 0.5], [-0.4, 0.4]]), (13, 13))
    entry = catalog("minkowski", win)
    bf = busemann_field(entry.field, TimelikeRay.boosted(2, alpha),
                        schedule=SCHEDULE)
    pts = win.grid_points()
    boosted_t = np.cosh(alpha) * pts[..., 0] - np.sinh(alpha) * pts[..., 1]
    assert np.max(np.abs(bf.bplus.values - boosted_t)) <= 2e-3


def test_local_structure_minkowski(mink_bf):
    entry, bf = mink_bf
    rep = local_structure_check(bf, entry.field, entry.weight)
    h = float(np.max(bf.window.spacing))
    assert rep["max_hessian"] <= 10 * h ** 2 + 1e-4
    assert rep["max_grad_norm_defect"] <= 1e-3
    assert rep["max_weight_defect"] <= 1e-3


def test_local_structure_weighted_product():
    win = split_window()
    entry = catalog("weighted-product", win, N=4)
    bf = busemann_field(entry.field, TimelikeRay.from_catalog(entry),
                        schedule=SCHEDULE)
    rep = local_structure_check(bf, entry.field, entry.weight)
    # grad b is the time direction, dV is spatial: they stay orthogonal
    assert rep["max_weight_defect"] <= 1e-3


def test_local_structure_negative_control(mink_bf):
    entry, bf = mink_bf
    win = bf.window
    pts = win.grid_points()
    fake_vals = pts[..., 0] + 0.05 * pts[..., 1] ** 2
    fake = BusemannField(win, ScalarField(win, fake_vals),
                         ScalarField(win, fake_vals),
                         np.zeros(win.grid_shape), entry.field)
    rep = local_structure_check(fake, entry.field, entry.weight)
    assert rep["max_hessian"] >= 0.09  # the planted defect, 2 * 0.05


def test_flow_map_minkowski(mink_bf):
    entry, bf = mink_bf
    ys = np.stack([np.zeros(5), np.linspace(-0.3, 0.3, 5)], axis=-1)
    fm = flow_map(entry.field, bf, ys, (-0.5, 0.5), 0.05)
    # the flow translates the time coordinate
    expect = ys[None, :, :] + np.stack(
        [fm.t_grid, np.zeros_like(fm.t_grid)], axis=-1)[:, None, :]
    assert np.max(np.abs(fm.trajectory - expect)) <= 1e-3
    assert fm.group_defect <= 1e-6
    assert fm.b_defect <= 1e-4
    assert fm.speed_defect <= 1e-3


def test_extract_cross_section_minkowski(mink_bf):
    entry, bf = mink_bf
    sec = extract_cross_section(entry.field, bf, 0.0, entry.weight)
    assert np.max(np.abs(sec.tau)) <= 1e-3
    np.testing.assert_allclose(sec.h[..., 0, 0], 1.0, atol=1e-3)


def test_extract_cross_section_recovers_hyperbolic_metric():
    win = ChartWindow(2, np.array([[-0.5, 0.5], [-0.35, 0.35]]), (13, 13))
    entry = catalog("product-hyperbolic", win)
    bf = busemann_field(entry.field, TimelikeRay.from_catalog(entry),
                        schedule=SCHEDULE)
    sec = extract_cross_section(entry.field, bf, 0.0, entry.weight)
    ys = sec.window.axes()[0]
    expect = (2.0 / (1.0 - ys ** 2)) ** 2
    np.testing.assert_allclose(sec.h[..., 0, 0], expect, atol=2e-3)


def test_extract_cross_section_rejects_nonmonotone(mink_bf):
    entry, bf = mink_bf
    win = bf.window
    pts = win.grid_points()
    bad_vals = pts[..., 0] ** 2  # not monotone along the columns
    bad = BusemannField(win, ScalarField(win, bad_vals),
                        ScalarField(win, bad_vals),
                        np.zeros(win.grid_shape), entry.field)
    with pytest.raises(LevelSetNotGraph):
        extract_cross_section(entry.field, bad, 0.5, entry.weight)


@pytest.mark.parametrize("name,N", [("minkowski", 2.0),
                                    ("product-flat", 2.0),
                                    ("product-hyperbolic", 2.0),
                                    ("weighted-product", 4.0)])
def test_end_to_end_product_verification(name, N):
    if name == "product-hyperbolic":
        win = ChartWindow(2, np.array([[-0.6, 0.6], [-0.35, 0.35]]), (15, 25))
    else:
        win = ChartWindow(2, np.array([[-0.6, 0.6], [-0.4, 0.4]]), (15, 25))
    entry = catalog(name, win, **({"N": N} if name == "weighted-product" else {}))
    bf = busemann_field(entry.field, TimelikeRay.from_catalog(entry),
                        schedule=(100.0, 200.0, 400.0))
    structure = local_structure_check(bf, entry.field, entry.weight)
    sec = extract_cross_section(entry.field, bf, 0.0, entry.weight)
    fm = flow_map(entry.field, bf, sec.points.reshape(-1, 2), (-0.45, 0.45),
                  0.05)
    rep = verify_product(entry.field, fm, sec, entry.weight, N,
                         structure=structure)
    assert rep.pullback_error <= 1e-3, name
    assert rep.group_defect <= 1e-6, name
    assert rep.weight_invariance <= 1e-6, name
    assert rep.speed_defect <= 1e-3, name
    assert rep.cross_probe["min_pairing"] >= -1e-6, name
    assert rep.structure["max_grad_norm_defect"] <= 1e-3, name
    assert rep.structure["max_weight_defect"] <= 1e-3, name


def test_corrupted_field_fails_product_check():
    win = split_window()
    entry = catalog("minkowski", win)
    pts = win.grid_points()
    alpha = 0.35
    vals = np.cosh(alpha) * pts[..., 0] - np.sinh(alpha) * pts[..., 1]
    bad = BusemannField(win, ScalarField(win, vals), ScalarField(win, vals),
                        np.zeros(win.grid_shape), entry.field)
    sec = extract_cross_section(entry.field, bad, 0.0, entry.weight)
    fm = flow_map(entry.field, bad, sec.points.reshape(-1, 2), (-0.3, 0.3),
                  0.05)
    rep = verify_product(entry.field, fm, sec, entry.weight, 2.0)
    # the boosted "b" is unit-gradient, so the flow runs, but the claimed
    # product frame is wrong by O(1)
    assert rep.pullback_error >= 0.05


def test_split_report_json(tmp_path, mink_bf):
    entry, bf = mink_bf
    sec = extract_cross_section(entry.field, bf, 0.0, entry.weight)
    fm = flow_map(entry.field, bf, sec.points.reshape(-1, 2), (-0.4, 0.4), 0.05)
    rep = verify_product(entry.field, fm, sec, entry.weight, 2.0)
    path = tmp_path / "split.json"
    rep.to_json(path)
    assert path.exists()
    bf_path = tmp_path / "bf.csv"
    bf.dump_csv(bf_path)
    assert bf_path.read_text().splitlines()[0].startswith("x0,x1,value,mask")
