"""Busemann functions of timelike rays and lines.

Catalog rays are closed-form curves, so the far points gamma_t exist well
beyond the chart window; separations against them are computed on a
window enlarged along the time axis and used only inside this module.
The splitting checks themselves stay on the base window.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .chart import AuxRiemannianField, MetricField, NULL_TOL, causal_character
from .errors import (NotConverged, NotInChronologicalFuture,
                     NotInChronologicalPast, VelocitiesNotCauchy)
from .fields import fd_gradient
from .geodesic import CausalCurve, integrate_geodesic, shoot_batch

__all__ = [
    "TimelikeRay",
    "BusemannValue",
    "AdaptednessCertificate",
    "SuperdifferentialProbe",
    "approx_busemann",
    "busemann_limit",
    "steepness_check",
    "certify_adapted",
    "co_ray",
    "superdifferential_probe",
    "DEFAULT_SCHEDULE",
]

DEFAULT_SCHEDULE = (25.0, 50.0, 100.0, 200.0)


@dataclass
class TimelikeRay:
    """A proper-time parametrized timelike ray or complete line.

    point(t) must be defined for all t used by the truncation schedules,
    which is why catalog rays are closed-form callables.
    """

    point: Callable       # t -> coordinates, vectorized over t
    velocity: Callable    # t -> tangent, vectorized over t
    kind: str = "line"    # "ray" (t >= 0) or "line" (all t)

    @classmethod
    def vertical(cls, dim, spatial=None, kind="line"):
        spatial = np.zeros(dim - 1) if spatial is None else np.asarray(spatial, float)

        def pt(t):
            t = np.asarray(t, float)
            out = np.empty(t.shape + (dim,), float)
            out[..., 0] = t
            out[..., 1:] = spatial
            return out

        def vel(t):
            t = np.asarray(t, float)
            out = np.zeros(t.shape + (dim,), float)
            out[..., 0] = 1.0
            return out

        return cls(pt, vel, kind)

    @classmethod
    def boosted(cls, dim, rapidity, kind="line"):
        """A Minkowski line boosted in the first spatial plane."""
        ch, sh = np.cosh(rapidity), np.sinh(rapidity)

        def pt(t):
            t = np.asarray(t, float)
            out = np.zeros(t.shape + (dim,), float)
            out[..., 0] = ch * t
            out[..., 1] = sh * t
            return out

        def vel(t):
            t = np.asarray(t, float)
            out = np.zeros(t.shape + (dim,), float)
            out[..., 0] = ch
            out[..., 1] = sh
            return out

        return cls(pt, vel, kind)

    @classmethod
    def from_catalog(cls, entry, kind="line"):
        return cls(entry.line_point, entry.line_velocity, kind)


@dataclass
class BusemannValue:
    sign: str                 # "+" or "-"
    truncation: float
    value: float
    convergence_gap: float
    meta: dict = dc_field(default_factory=dict)


@dataclass
class AdaptednessCertificate:
    curve_params: np.ndarray
    max_steepness_defect: float
    max_gap: float
    verdict: bool
    details: dict = dc_field(default_factory=dict)


@dataclass
class SuperdifferentialProbe:
    point: np.ndarray
    covector: np.ndarray
    radii: np.ndarray
    errors: np.ndarray        # e(r), max over the direction fan (and family)
    ratios: np.ndarray        # e(r) / r

    def ratio_limit(self):
        """Linear-in-r extrapolation of e(r)/r to r = 0."""
        if len(self.ratios) < 2:
            return float(self.ratios[-1])
        r1, r0 = self.radii[-1], self.radii[-2]
        q1, q0 = self.ratios[-1], self.ratios[-2]
        return float(q1 - (q0 - q1) * r1 / (r0 - r1))

    def superdifferentiable(self, tol=1e-3):
        return bool(self.ratio_limit() <= tol)


# ---------------------------------------------------------------------------
# Separations against far ray points
# ---------------------------------------------------------------------------

def _enlarged_field(field, targets):
    """The same metric served on a window stretched to cover the targets.

    Catalog metrics are closed-form, so evaluation beyond the base chart
    is safe; the stretched window only serves as the shooting guard box.
    """
    b = field.window.bounds.copy()
    pad = 0.05 * (b[:, 1] - b[:, 0]) + 1.0
    targets = np.atleast_2d(np.asarray(targets, float))
    lo = targets.min(axis=0) - pad
    hi = targets.max(axis=0) + pad
    b[:, 0] = np.minimum(b[:, 0], lo)
    b[:, 1] = np.maximum(b[:, 1], hi)
    return field.with_window(field.window.enlarged(b))


def _ell_batch(field, ray, X, t, sign, tol=1e-9, steps=None, aux=None):
    """l(x, gamma_t) for sign '+', l(gamma_{-t}, x) for sign '-', batched.

    Returns NaN where the pair is not chronologically related.
    """
    aux = aux or AuxRiemannianField()
    X = np.asarray(X, float)
    tip = ray.point(t if sign == "+" else -t)
    big = _enlarged_field(field, tip)
    target = np.broadcast_to(tip, X.shape).copy()
    if sign == "+":
        src, dst = X, target
    else:
        src, dst = target, X
    if steps is None:
        steps = int(np.clip(16 * np.sqrt(t + 1.0), 64, 320))
    W, proper, ok = shoot_batch(big, src, dst, tol=tol, steps=steps)
    from .geodesic import causal_filter
    return causal_filter(big, src, W, proper, ok, aux=aux, timelike_only=True)


def approx_busemann(field, ray: TimelikeRay, t, x, sign="+",
                    tol=1e-9, aux=None) -> BusemannValue:
    """Truncated Busemann value: t - l(x, gamma_t) or l(gamma_{-t}, x) - t."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if sign == "-" and ray.kind != "line":
        raise ValueError("backward Busemann values need a complete line")
    x = np.asarray(x, float)
    ell = _ell_batch(field, ray, x[None], float(t), sign, tol=tol, aux=aux)[0]
    if not np.isfinite(ell):
        if sign == "+":
            raise NotInChronologicalPast(
                f"{x.tolist()} is not in the chronological past of gamma({t})")
        raise NotInChronologicalFuture(
            f"{x.tolist()} is not in the chronological future of gamma({-t})")
    value = float(t - ell) if sign == "+" else float(ell - t)
    return BusemannValue(sign, float(t), value, np.nan)


def busemann_limit(field, ray: TimelikeRay, x, sign="+",
                   schedule=DEFAULT_SCHEDULE, tol=1e-3, extrapolate=False,
                   raise_on_gap=True, aux=None) -> BusemannValue:
    """Busemann value along a truncation schedule with a Richardson gap test.

    The reported value is the one at the largest truncation; with
    extrapolate=True the 1/T extrapolation of the top pair is used
    instead (the gap and the raw value are kept in meta).
    """
    vals = [approx_busemann(field, ray, T, x, sign, aux=aux).value
            for T in schedule]
    gap = abs(vals[-1] - vals[-2]) if len(vals) > 1 else np.nan
    trend = [abs(b - a) for a, b in zip(vals, vals[1:])]
    if raise_on_gap and np.isfinite(gap) and gap > tol:
        raise NotConverged(
            f"Busemann gap {gap:.3e} above tol {tol:.1e} at T={schedule[-1]}",
            gap=gap, trend=trend)
    value = vals[-1]
    meta = {"schedule": list(schedule), "values": vals, "trend": trend}
    if extrapolate and len(vals) > 1:
        Tl, Tp = schedule[-1], schedule[-2]
        value = (Tl * vals[-1] - Tp * vals[-2]) / (Tl - Tp)
        meta["raw_value"] = vals[-1]
        meta["extrapolated"] = True
    return BusemannValue(sign, float(schedule[-1]), float(value), float(gap),
                         meta)


def busemann_limit_batch(field, ray, X, sign="+", schedule=DEFAULT_SCHEDULE,
                         extrapolate=False, aux=None):
    """Vectorized Busemann limit over points X; NaN outside I(gamma).

    Returns (values, gaps)."""
    X = np.asarray(X, float)
    vals = []
    for T in schedule:
        ell = _ell_batch(field, ray, X, float(T), sign, aux=aux)
        vals.append(T - ell if sign == "+" else ell - T)
    gaps = np.abs(vals[-1] - vals[-2]) if len(vals) > 1 else np.full(X.shape[0], np.nan)
    out = vals[-1]
    if extrapolate and len(vals) > 1:
        Tl, Tp = schedule[-1], schedule[-2]
        out = (Tl * vals[-1] - Tp * vals[-2]) / (Tl - Tp)
    return out, gaps


# ---------------------------------------------------------------------------
# Steepness and adaptedness
# ---------------------------------------------------------------------------

def steepness_check(field, ray, pairs, sign="+", schedule=DEFAULT_SCHEDULE,
                    aux=None):
    """Positive part of l(x, y) - (b(y) - b(x)) over sampled pairs x <= y.

    Everything is evaluated in batch: one Busemann sweep per endpoint set
    and one shooting pass for the separations.
    """
    from .geodesic import causal_filter

    aux = aux or AuxRiemannianField()
    xs = np.asarray([p[0] for p in pairs], float)
    ys = np.asarray([p[1] for p in pairs], float)
    bx, _ = busemann_limit_batch(field, ray, xs, sign, schedule, aux=aux)
    by, _ = busemann_limit_batch(field, ray, ys, sign, schedule, aux=aux)
    W, proper, ok = shoot_batch(field, xs, ys)
    ell = causal_filter(field, xs, W, proper, ok, aux=aux)
    with np.errstate(invalid="ignore"):
        defects = np.clip(ell - (by - bx), 0.0, None)
    defects = np.where(np.isfinite(defects), defects, 0.0)
    worst = float(np.max(defects)) if len(defects) else 0.0
    i = int(np.argmax(defects)) if len(defects) else -1
    return {"max_defect": worst, "n_pairs": len(pairs), "sign": sign,
            "argmax": {"x": xs[i].tolist(), "y": ys[i].tolist(),
                       "ell": float(ell[i]) if np.isfinite(ell[i]) else None,
                       "db": float(by[i] - bx[i])} if i >= 0 else None}


def _chebyshev_params(a, b, k):
    theta = (2 * np.arange(k) + 1) * np.pi / (2 * k)
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * np.cos(theta))


def certify_adapted(field, line: TimelikeRay, sigma: CausalCurve, tol=1e-3,
                    schedule=DEFAULT_SCHEDULE, n_params=10, extrapolate=True,
                    aux=None) -> AdaptednessCertificate:
    """Certify that sigma is adapted to the line.

    Checks b(sigma_t) - b(sigma_s) = l(sigma_s, sigma_t) = t - s over
    Chebyshev-spaced parameter pairs, and that the forward and backward
    Busemann values agree along sigma.  The certificate concerns the
    Busemann limits, so the truncation-extrapolated values are used.
    """
    from .geodesic import causal_filter

    aux = aux or AuxRiemannianField()
    params = _chebyshev_params(sigma.params[0], sigma.params[-1], n_params)
    pts, _ = sigma.sample(params)
    bplus, _ = busemann_limit_batch(field, line, pts, "+", schedule,
                                    extrapolate=extrapolate, aux=aux)
    bminus, _ = busemann_limit_batch(field, line, pts, "-", schedule,
                                     extrapolate=extrapolate, aux=aux)
    gap = float(np.max(np.abs(bplus - bminus)))

    ii, jj = np.triu_indices(len(params), k=1)
    dts = params[jj] - params[ii]
    W, proper, ok = shoot_batch(field, pts[ii], pts[jj])
    ell = causal_filter(field, pts[ii], W, proper, ok, aux=aux)
    with np.errstate(invalid="ignore"):
        ell_defects = np.abs(ell - dts)
    d_ell = float(np.max(np.where(np.isfinite(ell_defects),
                                  ell_defects, np.inf)))
    d_b = float(np.max(np.abs((bplus[jj] - bplus[ii]) - dts)))
    steep = max(d_ell, d_b)
    return AdaptednessCertificate(
        curve_params=params,
        max_steepness_defect=float(steep),
        max_gap=gap,
        verdict=bool(steep < tol and gap < tol),
        details={"ell_defect": float(d_ell), "b_defect": float(d_b),
                 "n_pairs": len(params) * (len(params) - 1) // 2})


# ---------------------------------------------------------------------------
# Co-rays
# ---------------------------------------------------------------------------

def co_ray(field, ray: TimelikeRay, x, t_schedule=(25.0, 50.0, 100.0, 200.0),
           span=None, step=1e-2, cauchy_tol=1e-2, aux=None) -> CausalCurve:
    """Limit of maximizers from x to gamma_{t_n} along the schedule.

    Initial velocities are unit-normalized and tested for a Cauchy trend;
    the returned curve integrates from the 1/t-extrapolated limit and is
    classified timelike or null (the dichotomy) in meta["dichotomy"].
    """
    aux = aux or AuxRiemannianField()
    x = np.asarray(x, float)
    velocities = []
    curves_meta = []
    for t in t_schedule:
        big = _enlarged_field(field, ray.point(t))
        W, proper, ok = shoot_batch(big, x[None], ray.point(t)[None])
        if not ok[0]:
            continue
        w = W[0]
        q = float(field.norm2(x, w))
        v = w / np.sqrt(abs(q)) if abs(q) > NULL_TOL * float(aux.norm2(x, w)) \
            else w / np.sqrt(float(aux.norm2(x, w)))
        velocities.append((float(t), v))
        curves_meta.append({"t": float(t), "proper_time": float(proper[0])})
    if len(velocities) < 2:
        raise VelocitiesNotCauchy("fewer than two maximizers converged",
                                  velocities=[v for _, v in velocities])
    gaps = [float(np.linalg.norm(b - a)) for (_, a), (_, b)
            in zip(velocities, velocities[1:])]
    if len(gaps) >= 2 and gaps[-1] > gaps[0] + cauchy_tol:
        raise VelocitiesNotCauchy(
            f"velocity gaps not settling: {gaps}",
            velocities=[v for _, v in velocities])
    if gaps[-1] > cauchy_tol:
        raise VelocitiesNotCauchy(
            f"final velocity gap {gaps[-1]:.3e} above {cauchy_tol:.1e}",
            velocities=[v for _, v in velocities])

    (Tp, vp), (Tl, vl) = velocities[-2], velocities[-1]
    v_lim = (Tl * vl - Tp * vp) / (Tl - Tp)
    q = float(field.norm2(x, v_lim))
    if abs(q) > NULL_TOL * float(aux.norm2(x, v_lim)):
        v_lim = v_lim / np.sqrt(abs(q))
        dichotomy = "timelike"
    else:
        dichotomy = "null"

    if span is None:
        hi = field.window.bounds[0, 1]
        span = max(float(hi - x[0]), 10 * step)
    curve = integrate_geodesic(field, x, v_lim, span, step, aux=aux)
    curve.meta.update({
        "dichotomy": dichotomy,
        "velocity_gaps": gaps,
        "t_schedule": [t for t, _ in velocities],
        "initial_velocities": [v.tolist() for _, v in velocities],
        "limit_velocity": v_lim.tolist(),
        "maximizers": curves_meta,
    })
    return curve


# ---------------------------------------------------------------------------
# Superdifferentiability probes
# ---------------------------------------------------------------------------

def _sphere_fan(dim, count=16, seed=0):
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def superdifferential_probe(u, x, radii=(0.2, 0.1, 0.05, 0.025, 0.0125),
                            family=None, fan=16, grad_step=None,
                            seed=0) -> SuperdifferentialProbe:
    """Sample e(r) = max over a direction fan of u(x + w) - u(x) - <v, w>.

    u is a callable on batched points (the background metric is Euclidean,
    so the exponential map is translation).  With a family, the error is
    additionally maximized over its members at each radius: a shared
    decreasing envelope is the equi-superdifferentiability probe.
    """
    x = np.asarray(x, float)
    fns = [u] + list(family or [])
    h = grad_step or min(radii) / 4.0
    v = fd_gradient(fns[0], x[None], h, order=4)[0]
    dirs = _sphere_fan(x.shape[0], fan, seed)
    radii = np.asarray(sorted(radii, reverse=True), float)
    errs = np.empty(len(radii))
    u0s = [fn(x[None])[0] for fn in fns]
    for i, r in enumerate(radii):
        worst = -np.inf
        pts = x[None, :] + r * dirs
        for fn, u0 in zip(fns, u0s):
            vals = fn(pts)
            err = vals - u0 - r * dirs @ v
            worst = max(worst, float(np.max(err)))
        errs[i] = worst
    return SuperdifferentialProbe(x, v, radii, errs, errs / radii)
