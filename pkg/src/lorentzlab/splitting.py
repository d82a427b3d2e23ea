"""End-to-end splitting checks: Busemann fields on a window, local
structure, the gradient flow map, cross-section extraction, and
product-metric verification.

The splitting is verified, never discovered: b always comes from the
Busemann limit of a line, and the checks quantify how closely the window
carries the product structure that the limit predicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .busemann import DEFAULT_SCHEDULE, TimelikeRay, busemann_limit_batch
from .chart import ChartWindow, MetricField, WeightField, _multilinear
from .connection import christoffel_batch, energy_condition_probe
from .errors import FlowLeavesWindow, LevelSetNotGraph, StructureViolated
from .fields import ScalarField

__all__ = [
    "BusemannField",
    "FlowMap",
    "CrossSection",
    "SplitReport",
    "busemann_field",
    "local_structure_check",
    "flow_map",
    "extract_cross_section",
    "verify_product",
]


@dataclass
class BusemannField:
    """Forward and backward Busemann values of a line on a window grid."""

    window: ChartWindow
    bplus: ScalarField
    bminus: ScalarField
    gap: np.ndarray
    metric: MetricField
    meta: dict = dc_field(default_factory=dict)

    @property
    def b(self):
        """The working Busemann function (the forward member)."""
        return self.bplus

    def gradient_covector_grid(self):
        return self.bplus.gradient_grid()

    def gradient_vector_grid(self):
        db = self.gradient_covector_grid()
        pts = self.window.grid_points().reshape(-1, self.window.dim)
        ginv = np.linalg.inv(self.metric.eval(pts, check=False))
        grad = np.einsum("...ij,...j->...i", ginv,
                         db.reshape(-1, self.window.dim))
        return grad.reshape(db.shape)

    def gradient_norm_grid(self):
        """|db|_g at every node."""
        db = self.gradient_covector_grid().reshape(-1, self.window.dim)
        pts = self.window.grid_points().reshape(-1, self.window.dim)
        ginv = np.linalg.inv(self.metric.eval(pts, check=False))
        q = np.einsum("...ij,...i,...j->...", ginv, db, db)
        return np.sqrt(np.clip(q, 0.0, None)).reshape(self.window.grid_shape)

    def dump_csv(self, path):
        hess = self.bplus.hessian_grid()
        self.bplus.dump_csv(path, extra_columns={
            "bminus": self.bminus.values,
            "gap": self.gap,
            "hess_max": np.max(np.abs(hess), axis=(-2, -1)),
            "grad_norm": self.gradient_norm_grid(),
        })


def busemann_field(field, line: TimelikeRay, window=None,
                   schedule=DEFAULT_SCHEDULE, extrapolate=True,
                   aux=None) -> BusemannField:
    """Busemann limits of both signs on every node of the window grid."""
    window = window or field.window
    pts = window.grid_points().reshape(-1, window.dim)
    bp, gaps_p = busemann_limit_batch(field, line, pts, "+", schedule,
                                      extrapolate=extrapolate, aux=aux)
    bm, gaps_m = busemann_limit_batch(field, line, pts, "-", schedule,
                                      extrapolate=extrapolate, aux=aux)
    shape = window.grid_shape
    sf_p = ScalarField(window, bp.reshape(shape), name="busemann-plus")
    sf_m = ScalarField(window, bm.reshape(shape), name="busemann-minus")
    gap = (bp - bm).reshape(shape)
    return BusemannField(window, sf_p, sf_m, gap, field,
                         meta={"schedule": list(schedule),
                               "extrapolated": bool(extrapolate),
                               "max_gap_plus": float(np.nanmax(gaps_p)),
                               "max_gap_minus": float(np.nanmax(gaps_m))})


# ---------------------------------------------------------------------------
# Local structure
# ---------------------------------------------------------------------------

def local_structure_check(bf: BusemannField, field, V: WeightField,
                          region=None):
    """Max |Hess b|, | |db|_g - 1 |, and |dV(grad b)| over a region.

    The Hessian is the coordinate second difference minus the Christoffel
    contraction; all three quantities vanish on an exact product window.
    """
    window = bf.window
    n = window.dim
    pts = window.grid_points().reshape(-1, n)
    db = bf.gradient_covector_grid().reshape(-1, n)
    d2b = bf.bplus.hessian_grid().reshape(-1, n, n)

    g = field.eval(pts, check=False)
    dg = field.deriv(pts, check=False)
    gamma = christoffel_batch(g, dg)
    ginv = np.linalg.inv(g)
    hess = d2b - np.einsum("...kij,...k->...ij", gamma, db)
    hess_mag = np.max(np.abs(hess), axis=(-2, -1))
    grad = np.einsum("...ij,...j->...i", ginv, db)
    norm_defect = np.abs(np.sqrt(np.clip(
        np.einsum("...i,...i->...", db, grad), 0.0, None)) - 1.0)
    dV = V.deriv(pts)
    weight_defect = np.abs(np.einsum("...i,...i->...", dV, grad))

    if region is not None:
        region = np.asarray(region, float)
        inside = np.all((pts >= region[:, 0]) & (pts <= region[:, 1]), axis=-1)
    else:
        inside = np.ones(pts.shape[0], bool)
    inside &= np.isfinite(hess_mag) & np.isfinite(norm_defect)

    return {
        "max_hessian": float(np.max(hess_mag[inside])),
        "max_grad_norm_defect": float(np.max(norm_defect[inside])),
        "max_weight_defect": float(np.max(weight_defect[inside])),
        "max_gap": float(np.nanmax(np.abs(bf.gap))),
        "min_gap": float(np.nanmin(bf.gap)),
        "n_nodes": int(inside.sum()),
    }


# ---------------------------------------------------------------------------
# Flow map
# ---------------------------------------------------------------------------

@dataclass
class FlowMap:
    t_grid: np.ndarray            # (T,)
    samples: np.ndarray           # (S, n) starting points with b = level
    trajectory: np.ndarray        # (T, S, n)
    step: float
    group_defect: float
    b_defect: float
    speed_defect: float
    meta: dict = dc_field(default_factory=dict)

    def at(self, t_index):
        return self.trajectory[t_index]


def _grad_interp(bf: BusemannField):
    axes = bf.window.axes()
    grid = bf.gradient_vector_grid()

    def grad(x):
        return _multilinear(axes, grid, x)

    return grad


def _rk4_flow(grad, X0, t0, t1, steps):
    x = np.array(X0, float)
    out = [x.copy()]
    h = (t1 - t0) / steps
    for _ in range(steps):
        k1 = grad(x)
        k2 = grad(x + 0.5 * h * k1)
        k3 = grad(x + 0.5 * h * k2)
        k4 = grad(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.stack(out)


def flow_map(field, bf: BusemannField, y_samples, t_window, step,
             structure_tol=0.05, group_pairs=((0.3, 0.4),)) -> FlowMap:
    """Integrate the Busemann gradient flow from the given samples.

    Checks along the way: the flow stays in the window, b grows at unit
    rate, |db|_g stays near 1 (StructureViolated beyond structure_tol),
    and the one-parameter group property holds for the probe pairs.
    """
    y_samples = np.asarray(y_samples, float)
    t0, t1 = float(t_window[0]), float(t_window[1])
    grad = _grad_interp(bf)
    window = bf.window

    steps_fw = max(1, int(round(t1 / step))) if t1 > 0 else 0
    steps_bw = max(1, int(round(-t0 / step))) if t0 < 0 else 0
    fw = _rk4_flow(grad, y_samples, 0.0, t1, steps_fw) if steps_fw else \
        y_samples[None]
    bw = _rk4_flow(grad, y_samples, 0.0, t0, steps_bw) if steps_bw else \
        y_samples[None]
    traj = np.concatenate([bw[::-1], fw[1:]], axis=0)
    ts = np.concatenate([np.linspace(t0, 0.0, steps_bw + 1),
                         np.linspace(0.0, t1, steps_fw + 1)[1:]])

    slack = 1e-3 * float(np.min(window.spacing))
    if not np.all(window.contains(traj.reshape(-1, window.dim), tol=slack)):
        raise FlowLeavesWindow("a flow line left the chart window; shrink "
                               "the t-window or the sample set")

    flat = traj.reshape(-1, window.dim)
    b_vals = bf.bplus.value_at(flat).reshape(traj.shape[:-1])
    b0 = bf.bplus.value_at(y_samples)
    b_defect = float(np.max(np.abs(b_vals - (b0[None, :] + ts[:, None]))))

    vel = grad(flat)
    speed = np.sqrt(np.clip(field.norm2(flat, vel), 0.0, None))
    speed_defect = float(np.max(np.abs(speed - 1.0)))
    if speed_defect > structure_tol:
        raise StructureViolated(
            f"|db|_g drifted {speed_defect:.3e} from 1 along the flow")

    group_defect = 0.0
    for (s, t) in group_pairs:
        total = abs(s) + abs(t)
        if total == 0 or t1 <= 0:
            continue
        scale = min(1.0, t1 / total)  # stay within the forward span
        su, tu = abs(s) * scale, abs(t) * scale
        mid = _rk4_flow(grad, y_samples, 0.0, su,
                        max(1, int(round(su / step))))[-1]
        two = _rk4_flow(grad, mid, 0.0, tu,
                        max(1, int(round(tu / step))))[-1]
        one = _rk4_flow(grad, y_samples, 0.0, su + tu,
                        max(1, int(round((su + tu) / step))))[-1]
        group_defect = max(group_defect,
                           float(np.max(np.linalg.norm(two - one, axis=-1))))

    return FlowMap(ts, y_samples, traj, float(step), group_defect, b_defect,
                   speed_defect)


# ---------------------------------------------------------------------------
# Cross-section extraction
# ---------------------------------------------------------------------------

@dataclass
class CrossSection:
    window: ChartWindow           # (n-1)-dimensional spatial window
    points: np.ndarray            # spatial-grid + (n,) section sample points
    tau: np.ndarray               # graph heights over the spatial lattice
    h: np.ndarray                 # spatial-grid + (n-1, n-1), positive definite
    V_vals: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def metric_field(self):
        """The extracted metric served as a gridded Riemannian field."""
        axes = self.window.axes()
        hvals = self.h
        sp = self.window.spacing
        grads = np.gradient(hvals, *sp, axis=tuple(range(self.window.dim)),
                            edge_order=2)
        if self.window.dim == 1:
            grads = [grads]
        dh = np.stack(grads, axis=-3)

        def ev(x):
            return _multilinear(axes, hvals, x)

        def dv(x):
            return _multilinear(axes, dh, x)

        return MetricField(self.window, ev, dv, None, "C1",
                           name="cross-section")

    def weight_field(self, N):
        axes = self.window.axes()
        vvals = self.V_vals
        sp = self.window.spacing
        grads = np.gradient(vvals, *sp, edge_order=2)
        if self.window.dim == 1:
            grads = [grads]
        dV = np.stack(grads, axis=-1)

        def ev(x):
            return _multilinear(axes, vvals, x)

        def dv(x):
            return _multilinear(axes, dV, x)

        return WeightField(ev, dv, N, self.window.dim, name="section-weight")


def _bisect_level(ts, vals, level, tol=1e-10):
    """Bisection for vals(t) = level on the linear interpolant of a
    monotone bracketing segment."""
    k = None
    sign = np.sign(vals - level)
    crossings = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if len(crossings) == 0:
        return None
    if len(crossings) > 1:
        raise LevelSetNotGraph("multiple level crossings along a column")
    k = crossings[0]
    lo, hi = ts[k], ts[k + 1]
    flo = np.interp(lo, ts, vals) - level
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = np.interp(mid, ts, vals) - level
        if fm == 0.0 or hi - lo < tol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def extract_cross_section(field, bf: BusemannField, level=0.0,
                          V: WeightField = None) -> CrossSection:
    """Locate the level set {b = level} column by column and restrict -g.

    The level set is treated as a graph over the spatial lattice along
    the axis most aligned with grad b; non-monotone columns raise
    LevelSetNotGraph.
    """
    window = bf.window
    n = window.dim
    grad_mean = np.nanmean(np.abs(
        bf.gradient_vector_grid().reshape(-1, n)), axis=0)
    axis = int(np.argmax(grad_mean))
    if axis != 0:
        raise LevelSetNotGraph("grad b is not aligned with the time axis; "
                               "reorient the chart")

    axes = window.axes()
    ts = axes[0]
    bvals = bf.bplus.values
    spatial_shape = window.grid_shape[1:]
    cols = bvals.reshape(len(ts), -1)
    ncols = cols.shape[1]
    tau = np.empty(ncols)
    for j in range(ncols):
        col = cols[:, j]
        if not np.all(np.isfinite(col)):
            raise LevelSetNotGraph("masked nodes inside a level-set column")
        d = np.diff(col)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise LevelSetNotGraph("b is not monotone along a column")
        root = _bisect_level(ts, col, level)
        if root is None:
            raise LevelSetNotGraph("level does not cross a column; shrink "
                                   "the level or enlarge the window")
        tau[j] = root
    tau = tau.reshape(spatial_shape)

    spatial_axes = axes[1:]
    mesh = np.meshgrid(*spatial_axes, indexing="ij") if spatial_axes else []
    pts = np.empty(spatial_shape + (n,))
    pts[..., 0] = tau
    for a in range(1, n):
        pts[..., a] = mesh[a - 1]

    # tangent frame of the graph: T_a = e_a + (d tau / d y_a) e_0
    sp = np.array([axes[a][1] - axes[a][0] for a in range(1, n)])
    if n == 2:
        dtau = [np.gradient(tau, sp[0], edge_order=2)]
    else:
        dtau = np.gradient(tau, *sp, edge_order=2)
    g = field.eval(pts.reshape(-1, n), check=False).reshape(
        spatial_shape + (n, n))
    h = np.empty(spatial_shape + (n - 1, n - 1))
    for a in range(n - 1):
        Ta = np.zeros(spatial_shape + (n,))
        Ta[..., 0] = dtau[a]
        Ta[..., a + 1] = 1.0
        for bax in range(n - 1):
            Tb = np.zeros(spatial_shape + (n,))
            Tb[..., 0] = dtau[bax]
            Tb[..., bax + 1] = 1.0
            h[..., a, bax] = -np.einsum("...ij,...i,...j->...", g, Ta, Tb)
    eig = np.linalg.eigvalsh(h)
    if not np.all(eig > 0):
        raise LevelSetNotGraph("extracted cross-section metric is not "
                               "positive definite")

    Vv = V.eval(pts.reshape(-1, n)).reshape(spatial_shape) if V is not None \
        else np.zeros(spatial_shape)
    sec_window = ChartWindow(n - 1,
                             np.array([[a[0], a[-1]] for a in spatial_axes]),
                             spatial_shape)
    return CrossSection(sec_window, pts, tau, h, Vv,
                        meta={"level": float(level), "column_axis": axis})


# ---------------------------------------------------------------------------
# Product verification
# ---------------------------------------------------------------------------

@dataclass
class SplitReport:
    pullback_error: float
    time_row_error: float
    measure_error: float
    weight_invariance: float
    group_defect: float
    b_defect: float
    speed_defect: float
    structure: dict
    cross_probe: dict
    meta: dict = dc_field(default_factory=dict)

    def passes(self, pullback_tol=1e-3, group_tol=1e-6, weight_tol=1e-6,
               probe_floor=-1e-6):
        return bool(self.pullback_error <= pullback_tol
                    and self.group_defect <= group_tol
                    and self.weight_invariance <= weight_tol
                    and self.cross_probe["min_pairing"] >= probe_floor)

    def to_json(self, path):
        payload = {
            "pullback_error": self.pullback_error,
            "time_row_error": self.time_row_error,
            "measure_error": self.measure_error,
            "weight_invariance": self.weight_invariance,
            "group_defect": self.group_defect,
            "b_defect": self.b_defect,
            "speed_defect": self.speed_defect,
            "structure": self.structure,
            "cross_probe_min": self.cross_probe["min_pairing"],
            "cross_probe_holds": self.cross_probe["holds"],
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def verify_product(field, flow: FlowMap, section: CrossSection, V, N,
                   structure=None, probe_margin=0.05) -> SplitReport:
    """Pull g back through the flow lattice and compare with dt^2 - h.

    Also checks the weighted-measure splitting, the invariance of the
    weight along flow lines, and the cross-section curvature condition
    Ric^(h, N-1, V) >= 0 through the Riemannian probe.
    """
    n = field.dim
    spatial_shape = section.window.grid_shape
    T = len(flow.t_grid)
    traj = flow.trajectory.reshape((T,) + spatial_shape + (n,))

    # Jacobian columns by centered differences over the flow lattice
    dt = flow.t_grid[1] - flow.t_grid[0]
    dFl_dt = np.gradient(traj, dt, axis=0, edge_order=2)
    cols = [dFl_dt]
    for a in range(n - 1):
        sp = section.window.spacing[a]
        cols.append(np.gradient(traj, sp, axis=1 + a, edge_order=2))

    flat = traj.reshape(-1, n)
    g = field.eval(flat, check=False).reshape(traj.shape[:-1] + (n, n))
    pull = np.empty(traj.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(n):
            pull[..., i, j] = np.einsum("...ij,...i,...j->...",
                                        g, cols[i], cols[j])

    target = np.zeros_like(pull)
    target[..., 0, 0] = 1.0
    hgrid = section.h
    for a in range(n - 1):
        for b in range(n - 1):
            target[..., 1 + a, 1 + b] = -np.broadcast_to(
                hgrid[..., a, b], traj.shape[:-1])

    diff = np.abs(pull - target)
    pullback_error = float(np.max(diff))
    time_row = np.abs(pull[..., 0, :] - target[..., 0, :])
    time_row_error = float(np.max(time_row))

    Vfl = V.eval(flat).reshape(traj.shape[:-1])
    V0 = section.V_vals[None, ...]
    weight_invariance = float(np.max(np.abs(Vfl - V0)))

    dens_flow = np.exp(-Vfl) * np.sqrt(np.abs(np.linalg.det(pull)))
    dens_sec = np.exp(-section.V_vals) * np.sqrt(np.linalg.det(section.h))
    measure_error = float(np.max(np.abs(dens_flow - dens_sec[None, ...])))

    sec_field = section.metric_field()
    sec_weight = section.weight_field(max(float(N) - 1.0, section.window.dim))
    bounds = section.window.bounds.copy()
    widths = bounds[:, 1] - bounds[:, 0]
    margin = np.maximum(probe_margin * widths, 2.5 * section.window.spacing)
    bounds[:, 0] += margin
    bounds[:, 1] -= margin
    probe = energy_condition_probe(sec_field, sec_weight,
                                   max(float(N) - 1.0, section.window.dim),
                                   bounds, 0.0, mode="riemannian")

    return SplitReport(
        pullback_error=pullback_error,
        time_row_error=time_row_error,
        measure_error=measure_error,
        weight_invariance=weight_invariance,
        group_defect=flow.group_defect,
        b_defect=flow.b_defect,
        speed_defect=flow.speed_defect,
        structure=structure or {},
        cross_probe=probe,
        meta={"N": float(N), "n_flow_samples": int(np.prod(spatial_shape)),
              "t_window": [float(flow.t_grid[0]), float(flow.t_grid[-1])]},
    )
