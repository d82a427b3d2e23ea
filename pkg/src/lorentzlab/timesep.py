"""Causal relations and the time separation on chart windows.

The supremum defining the time separation is hard to certify from above,
so it is reported as the larger of two independent lower-bounding
methods: multi-start geodesic shooting and projected-ascent over
discretized causal curves.  Disagreement beyond tolerance sets a quality
flag instead of being silently resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .chart import AuxRiemannianField, MetricField, NULL_TOL
from .errors import DiamondLeavesWindow, NoConnection
from .fields import ScalarField
from .geodesic import CausalCurve, shoot, shoot_batch, is_maximizer

__all__ = [
    "SeparationValue",
    "SeparationField",
    "causally_related",
    "lorentz_distance",
    "separation_field",
]


@dataclass
class SeparationValue:
    """Time separation between two points.

    kind is "related" with value >= 0, or "unrelated"; the missing-curve
    case is a sentinel kind, never a numeric infinity.
    """

    kind: str
    value: float = 0.0
    witness: Optional[CausalCurve] = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def related(self):
        return self.kind == "related"


# ---------------------------------------------------------------------------
# Causal diamond containment estimate
# ---------------------------------------------------------------------------

def _null_slope_bounds(field, n_samples=4):
    """Per-spatial-axis coordinate slope bounds |dx^a/dx^0| of null cones,
    measured on a coarse sample of the window."""
    window = field.window
    n = window.dim
    axes = [np.linspace(window.bounds[i, 0], window.bounds[i, 1], n_samples)
            for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    g = field.eval(pts, check=False)
    slopes = np.zeros(n - 1)
    for a in range(1, n):
        g00 = g[:, 0, 0]
        g0a = g[:, 0, a]
        gaa = g[:, a, a]
        disc = np.sqrt(np.clip(g0a ** 2 - g00 * gaa, 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (np.abs(g0a) + disc) / np.abs(gaa)
        slopes[a - 1] = float(np.max(np.where(np.isfinite(s), s, 0.0)))
    return slopes


def _diamond_inside_window(field, x, y, safety=1.05):
    """Cone-hull estimate of the causal diamond between x and y."""
    window = field.window
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    dt = y[0] - x[0]
    if dt <= 0:
        return True  # empty or degenerate diamond, nothing to leave the window
    slopes = _null_slope_bounds(field)
    ok = True
    for a in range(1, window.dim):
        reach = safety * slopes[a - 1] * dt / 2.0
        lo = min(x[a], y[a]) - reach
        hi = max(x[a], y[a]) + reach
        ok &= lo >= window.bounds[a, 0] and hi <= window.bounds[a, 1]
    return bool(ok)


# ---------------------------------------------------------------------------
# Discretized-curve ascent
# ---------------------------------------------------------------------------

def _segment_data(field, P):
    mid = 0.5 * (P[:-1] + P[1:])
    delta = P[1:] - P[:-1]
    g = field.eval(mid, check=False)
    dg = field.deriv(mid, check=False)
    q = np.einsum("...ij,...i,...j->...", g, delta, delta)
    return mid, delta, g, dg, q


def _ascent_objective(q, q0):
    """Concave surrogate for sqrt(q) extended linearly below q0."""
    safe = np.where(q >= q0, q, q0)
    val = np.where(q >= q0, np.sqrt(safe),
                   np.sqrt(q0) + (q - q0) / (2.0 * np.sqrt(q0)))
    return float(np.sum(val))


def _ascent_gradient(field, P, q0):
    mid, delta, g, dg, q = _segment_data(field, P)
    m = P.shape[0]
    n = P.shape[1]
    safe_q = np.where(q >= q0, q, q0)
    dphi = 1.0 / (2.0 * np.sqrt(safe_q))  # also the slope of the extension
    # dq_k/dP_{k+1} = 2 g(mid) delta + 0.5 dg(mid)(delta, delta)
    gd = 2.0 * np.einsum("...ij,...j->...i", g, delta)
    half_dg = 0.5 * np.einsum("...cab,...a,...b->...c", dg, delta, delta)
    grad = np.zeros((m, n))
    grad[1:] += dphi[:, None] * (gd + half_dg)
    grad[:-1] += dphi[:, None] * (-gd + half_dg)
    return grad, q


def _curve_ascent(field, x, y, n_nodes=33, iters=300, aux=None):
    """Projected gradient ascent of Lorentzian arclength over discretized
    curves from x to y.  Returns (value, curve) or None if no causal
    polyline was reached."""
    aux = aux or AuxRiemannianField()
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.shape[0]
    chord = y - x
    seg_scale = float(aux.norm2(x, chord)) / (n_nodes - 1) ** 2
    q0 = 1e-8 * max(seg_scale, 1e-30)

    s = np.linspace(0.0, 1.0, n_nodes)
    bows = [np.zeros(n)]
    for a in range(1, n):
        e = np.zeros(n)
        e[a] = 0.15 * np.sqrt(max(seg_scale, 0.0)) * (n_nodes - 1)
        bows.extend([e, -e])

    best = None
    for bow in bows:
        P = x[None, :] + s[:, None] * chord[None, :]
        P = P + np.sin(np.pi * s)[:, None] * bow[None, :]
        _, _, _, _, q = _segment_data(field, P)
        L = _ascent_objective(q, q0)
        stall = 0
        for _ in range(iters):
            grad, q = _ascent_gradient(field, P, q0)
            grad[0] = 0.0
            grad[-1] = 0.0
            gmax = float(np.max(np.abs(grad)))
            if gmax == 0.0:
                break
            eta = 0.05 * np.sqrt(max(seg_scale, q0)) / gmax
            improved = False
            for _ in range(10):
                Pn = P + eta * grad
                _, _, _, _, qn = _segment_data(field, Pn)
                Ln = _ascent_objective(qn, q0)
                if Ln > L + 1e-15:
                    P, L = Pn, Ln
                    improved = True
                    break
                eta *= 0.5
            if not improved:
                stall += 1
                if stall >= 2:
                    break
        mid, delta, g, dg, q = _segment_data(field, P)
        F = field.orientation(mid)
        future = np.einsum("...ij,...i,...j->...", g, delta, F) >= 0.0
        band = NULL_TOL * aux.norm2(mid, delta)
        causal = np.all(q >= -band) and np.all(future)
        if not causal:
            continue
        value = float(np.sum(np.sqrt(np.clip(q, 0.0, None))))
        if best is None or value > best[0]:
            best = (value, P)
    if best is None:
        return None
    value, P = best
    vel = np.gradient(P, s, axis=0)
    curve = CausalCurve(s, P, vel, "future-causal-polyline", 0.0,
                        meta={"method": "curve-ascent"})
    return value, curve


# ---------------------------------------------------------------------------
# Lorentz distance
# ---------------------------------------------------------------------------

def lorentz_distance(field, x, y, tol=1e-9, method="both",
                     strict_diamond=True, verify_witness=False,
                     shoot_steps=None, aux=None) -> SeparationValue:
    """Time separation between x and y on the chart window.

    method: "shoot", "ascent", or "both".  With "both" the value is the
    maximum of the two lower bounds and a disagreement beyond the curve
    discretization tolerance is flagged in meta["quality_flag"].
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    field.window.require_inside(x)
    field.window.require_inside(y)
    aux = aux or AuxRiemannianField()

    meta = {}
    if not _diamond_inside_window(field, x, y):
        if strict_diamond:
            raise DiamondLeavesWindow(
                "the causal diamond may leave the window; any separation "
                "would only be a lower bound")
        meta["diamond_flag"] = True

    shoot_val = None
    witness = None
    if method in ("shoot", "both"):
        try:
            curve = shoot(field, x, y, tol=tol, steps=shoot_steps,
                          check_relation=False, classify_maximizing=False,
                          aux=aux)
            shoot_val = curve.meta["proper_time"]
            witness = curve
            meta["shoot_value"] = shoot_val
        except NoConnection:
            pass

    ascent_val = None
    if method in ("ascent", "both"):
        out = _curve_ascent(field, x, y, aux=aux)
        if out is not None:
            ascent_val, ascent_curve = out
            meta["ascent_value"] = ascent_val
            if shoot_val is None or ascent_val > shoot_val:
                witness = ascent_curve

    values = [v for v in (shoot_val, ascent_val) if v is not None]
    if not values:
        return SeparationValue("unrelated", meta=meta)
    value = max(values)
    if len(values) == 2:
        gap = abs(values[0] - values[1])
        ascent_tol = 1e-3 * (1.0 + value)
        if gap > ascent_tol:
            meta["quality_flag"] = True
            meta["method_gap"] = gap
    sep = SeparationValue("related", value, witness, meta)
    if verify_witness and witness is not None:
        okay, violations = is_maximizer(
            field, witness, samples=4, tol=max(100 * tol, 1e-6),
            distance=lambda a, b: lorentz_distance(
                field, a, b, tol=tol, method="shoot", strict_diamond=False,
                verify_witness=False, aux=aux))
        meta["witness_maximizing"] = okay
        if not okay:
            meta["witness_violations"] = violations
    return sep


def causally_related(field, x, y, aux=None):
    """Classify the pair as chronological, causal-only, or unrelated."""
    aux = aux or AuxRiemannianField()
    sep = lorentz_distance(field, x, y, method="both", strict_diamond=False,
                           aux=aux)
    if not sep.related:
        return "unrelated"
    chord = np.asarray(y, float) - np.asarray(x, float)
    null_len = np.sqrt(NULL_TOL * max(float(aux.norm2(x, chord)), 1e-30))
    return "chronological" if sep.value > null_len else "causal-only"


# ---------------------------------------------------------------------------
# Separation fields on grids
# ---------------------------------------------------------------------------

@dataclass
class SeparationField:
    """Gridded time separation to or from a fixed origin."""

    origin: np.ndarray
    direction: str               # "to-o" (l(node, o)) or "from-o" (l(o, node))
    field: ScalarField
    quality: float               # fraction of nodes with ||dl|_g - 1| > 0.05
    gradient_norms: np.ndarray

    @property
    def values(self):
        return self.field.values

    @property
    def mask(self):
        return self.field.mask

    def gradient_grid(self):
        return self.field.gradient_grid()

    def dump_csv(self, path):
        self.field.dump_csv(path, extra_columns={"grad_norm": self.gradient_norms})


def _batched_separation(field, points, origin, direction, tol, steps, aux):
    """Shoot-route separation for many source/target points at once."""
    origin = np.asarray(origin, float)
    B = points.shape[0]
    if direction == "to-o":
        X = points
        Y = np.broadcast_to(origin, points.shape).copy()
    else:
        X = np.broadcast_to(origin, points.shape).copy()
        Y = points
    W, proper, ok = shoot_batch(field, X, Y, tol=tol, steps=steps)
    from .geodesic import causal_filter
    return causal_filter(field, X, W, proper, ok, aux=aux)


def separation_evaluator(field, o, direction="to-o", tol=1e-9, steps=64,
                         aux=None):
    """A batched point evaluator of the separation against o.

    Returns a callable (B, n) -> (B,) with NaN where unrelated; used to
    back ScalarFields whose derivative stencils pick their own step.  The
    working window is stretched to cover o, so origins slightly beyond
    the chart are usable for analytic metrics.
    """
    aux = aux or AuxRiemannianField()
    o = np.asarray(o, float)
    bounds = field.window.bounds.copy()
    pad = 0.05 * (bounds[:, 1] - bounds[:, 0])
    bounds[:, 0] = np.minimum(bounds[:, 0], o - pad)
    bounds[:, 1] = np.maximum(bounds[:, 1], o + pad)
    big = field.with_window(field.window.enlarged(bounds))

    def evaluate(points):
        points = np.asarray(points, float)
        flat = points.reshape(-1, points.shape[-1])
        vals = _batched_separation(big, flat, o, direction, tol, steps, aux)
        return vals.reshape(points.shape[:-1])

    return evaluate


def separation_field(field, o, direction="to-o", window=None, tol=1e-9,
                     steps=None, aux=None) -> SeparationField:
    """Evaluate the separation against o on every grid node.

    Nodes outside the relevant cone, or whose diamond estimate leaves the
    window, are masked rather than reported.
    """
    if direction not in ("to-o", "from-o"):
        raise ValueError("direction must be 'to-o' or 'from-o'")
    aux = aux or AuxRiemannianField()
    window = window or field.window
    o = np.asarray(o, float)
    field.window.require_inside(o)
    pts = window.grid_points().reshape(-1, window.dim)

    vals = _batched_separation(field, pts, o, direction, tol,
                               steps or 64, aux)

    # mask nodes whose diamond estimate is not contained in the window
    slopes = _null_slope_bounds(field)
    for a in range(1, window.dim):
        if direction == "to-o":
            dt = o[0] - pts[:, 0]
            lo = np.minimum(pts[:, a], o[a])
            hi = np.maximum(pts[:, a], o[a])
        else:
            dt = pts[:, 0] - o[0]
            lo = np.minimum(pts[:, a], o[a])
            hi = np.maximum(pts[:, a], o[a])
        reach = 1.05 * slopes[a - 1] * np.clip(dt, 0.0, None) / 2.0
        bad = ((lo - reach < field.window.bounds[a, 0])
               | (hi + reach > field.window.bounds[a, 1]))
        vals = np.where(bad & np.isfinite(vals) & (vals > 0), np.nan, vals)

    grid_vals = vals.reshape(window.grid_shape)
    sf = ScalarField(window, grid_vals, name=f"separation-{direction}")

    grads = sf.gradient_grid().reshape(-1, window.dim)
    g = field.eval(pts, check=False)
    ginv = np.linalg.inv(g)
    with np.errstate(invalid="ignore"):
        gn2 = np.einsum("...ij,...i,...j->...", ginv, grads, grads)
        gn = np.sqrt(np.clip(gn2, 0.0, None))
    gn = gn.reshape(window.grid_shape)
    interior = np.isfinite(grid_vals) & np.isfinite(gn) & (grid_vals > 0.05)
    flagged = interior & (np.abs(gn - 1.0) > 0.05)
    quality = float(flagged.sum() / max(interior.sum(), 1))
    sf.meta["quality"] = quality
    return SeparationField(o, direction, sf, quality, gn)
