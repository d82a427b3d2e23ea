"""Geodesic integration, maximizer certification, and two-point shooting.

The geodesic right-hand side is merely continuous for C1 metrics, so the
fixed-step RK4 integrator returns the trajectory it computes and makes no
uniqueness claim; nonuniqueness is probed statistically by
compactness_experiment rather than assumed away.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .chart import AuxRiemannianField, MetricField, NULL_TOL, causal_character
from .connection import christoffel_batch
from .errors import NoConnection, NotCausallyRelated, StepTooLarge

__all__ = [
    "CausalCurve",
    "integrate_geodesic",
    "is_maximizer",
    "shoot",
    "shoot_batch",
    "compactness_experiment",
]


@dataclass
class CausalCurve:
    """A sampled parametrized curve with velocities and causal metadata."""

    params: np.ndarray          # strictly increasing sample parameters
    points: np.ndarray          # (m, n)
    velocities: np.ndarray      # (m, n)
    character: str
    norm_drift: float
    exited: bool = False
    exit_time: Optional[float] = None
    maximizing: Optional[bool] = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def endpoint(self):
        return self.points[-1]

    @property
    def start(self):
        return self.points[0]

    def sample(self, t):
        """Linear interpolation of point and velocity at parameter t."""
        t = np.asarray(t, float)
        pt = np.stack([np.interp(t, self.params, self.points[:, i])
                       for i in range(self.points.shape[1])], axis=-1)
        vl = np.stack([np.interp(t, self.params, self.velocities[:, i])
                       for i in range(self.points.shape[1])], axis=-1)
        return pt, vl

    def arclength(self, field):
        """Lorentzian length of the sampled curve."""
        q = field.norm2(self.points, self.velocities)
        speed = np.sqrt(np.clip(q, 0.0, None))
        return float(np.trapezoid(speed, self.params))

    def to_csv(self, path):
        n = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)]
                       + [f"v{i}" for i in range(n)])
            for k in range(len(self.params)):
                w.writerow([repr(float(self.params[k]))]
                           + [repr(float(v)) for v in self.points[k]]
                           + [repr(float(v)) for v in self.velocities[k]])


# ---------------------------------------------------------------------------
# RK4 machinery (batched)
# ---------------------------------------------------------------------------

def _acceleration(field, x, v):
    g = field.eval(x, check=False)
    dg = field.deriv(x, check=False)
    gamma = christoffel_batch(g, dg)
    return -np.einsum("...ijk,...j,...k->...i", gamma, v, v)


def _rk4_step(field, x, v, h):
    h = h if np.ndim(h) == 0 else h[..., None]
    k1x, k1v = v, _acceleration(field, x, v)
    k2x = v + 0.5 * h * k1v
    k2v = _acceleration(field, x + 0.5 * h * k1x, k2x)
    k3x = v + 0.5 * h * k2v
    k3v = _acceleration(field, x + 0.5 * h * k2x, k3x)
    k4x = v + h * k3v
    k4v = _acceleration(field, x + h * k3x, k4x)
    xn = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return xn, vn


def _integrate_endpoints(field, X0, V0, span, steps, guard_bounds=None):
    """Endpoint-only batched integration used by the shooting solver.

    Trajectories that blow up or leave the guard box are flagged invalid.
    """
    x = np.array(X0, float)
    v = np.array(V0, float)
    h = span / steps
    valid = np.ones(x.shape[0], bool)
    with np.errstate(all="ignore"):
        for _ in range(steps):
            x, v = _rk4_step(field, x, v, h)
            finite = np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(v), axis=-1)
            valid &= finite
            x[~finite] = 0.0
            v[~finite] = 0.0
            if guard_bounds is not None:
                lo, hi = guard_bounds
                inside = np.all((x >= lo) & (x <= hi), axis=-1)
                valid &= inside
    return x, v, valid


def integrate_geodesic(field: MetricField, x, v, span, step,
                       drift_guard=1e-3, aux=None) -> CausalCurve:
    """Fixed-step RK4 trajectory of the geodesic equation.

    Truncates with an exit marker if the trajectory leaves the chart
    window; raises StepTooLarge when the conserved norm g(v, v) drifts
    beyond drift_guard of its initial size.
    """
    x0 = np.asarray(x, float)
    v0 = np.asarray(v, float)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")
    field.window.require_inside(x0)
    aux = aux or AuxRiemannianField()

    if np.ndim(span) == 0:
        t0, t1 = 0.0, float(span)
    else:
        t0, t1 = float(span[0]), float(span[1])
    steps = max(1, int(round((t1 - t0) / step)))
    h = (t1 - t0) / steps

    pts = [x0]
    vels = [v0]
    params = [t0]
    exited = False
    exit_time = None
    xc, vc = x0.copy(), v0.copy()
    for k in range(steps):
        xb = xc[None, :]
        vb = vc[None, :]
        xn, vn = _rk4_step(field, xb, vb, h)
        xn, vn = xn[0], vn[0]
        if not field.window.contains(xn):
            exited = True
            exit_time = t0 + k * h
            break
        xc, vc = xn, vn
        pts.append(xc.copy())
        vels.append(vc.copy())
        params.append(t0 + (k + 1) * h)

    points = np.asarray(pts)
    velocities = np.asarray(vels)
    q = field.norm2(points, velocities)
    drift = float(np.max(np.abs(q - q[0])))
    scale = max(abs(float(q[0])), NULL_TOL * float(aux.norm2(x0, v0)))
    if drift > drift_guard * scale:
        raise StepTooLarge(f"norm drift {drift:.3e} exceeds "
                           f"{drift_guard:.1e} * {scale:.3e}; reduce the step")
    char = causal_character(field, x0, v0, aux=aux)
    return CausalCurve(np.asarray(params), points, velocities, char, drift,
                       exited=exited, exit_time=exit_time)


# ---------------------------------------------------------------------------
# Maximizer certification
# ---------------------------------------------------------------------------

def is_maximizer(field, curve: CausalCurve, samples=5, tol=1e-6,
                 distance=None):
    """Check additivity of the time separation along sampled triples.

    Returns (verdict, violations); a violation record is (s, r, t, gap)
    where gap = l(s, t) - l(s, r) - l(r, t) fails |gap| <= tol * (1 + l).
    """
    if distance is None:
        from .timesep import lorentz_distance

        def distance(a, b):
            return lorentz_distance(field, a, b, verify_witness=False)

    idx = np.unique(np.linspace(0, len(curve.params) - 1, samples).astype(int))
    ts = curve.params[idx]
    xs = curve.points[idx]
    cache = {}

    def ell(i, j):
        if (i, j) not in cache:
            sep = distance(xs[i], xs[j])
            cache[(i, j)] = sep.value if sep.kind == "related" else -np.inf
        return cache[(i, j)]

    violations = []
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            for c in range(b + 1, len(idx)):
                lac = ell(a, c)
                lab = ell(a, b)
                lbc = ell(b, c)
                if not np.isfinite([lac, lab, lbc]).all():
                    violations.append((float(ts[a]), float(ts[b]),
                                       float(ts[c]), np.inf))
                    continue
                gap = lac - lab - lbc
                if abs(gap) > tol * (1.0 + abs(lac)):
                    violations.append((float(ts[a]), float(ts[b]),
                                       float(ts[c]), float(gap)))
    return len(violations) == 0, violations


# ---------------------------------------------------------------------------
# Two-point boundary problem
# ---------------------------------------------------------------------------

def _fan_starts(field, x, y):
    """Initial velocity candidates: the chord plus a cone-interior fan."""
    n = field.dim
    chord = y - x
    starts = [chord]
    g = field.eval(x)
    F = field.orientation(x)
    T = F / np.sqrt(max(F @ g @ F, 1e-30))
    spatial = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        for b in [T] + spatial:
            gb = g @ b
            e = e - (e @ gb) / (b @ gb) * b
        q = e @ g @ e
        if abs(q) > 1e-12:
            spatial.append(e / np.sqrt(abs(q)))
    tscale = chord @ g @ T  # time extent of the chord in the frame of T
    for e in spatial:
        for s in (-0.85, -0.5, 0.5, 0.85):
            starts.append(tscale * (T + s * e))
    return starts


def shoot_batch(field, X, Y, tol=1e-9, steps=None, max_iter=14,
                guard_factor=1.5, starts_from=None):
    """Newton shooting from X[b] to Y[b] over affine parameter [0, 1].

    Returns (W, proper_time, ok): initial velocities, the Lorentzian
    length of each solution, and a per-row success flag.  Causality is
    not enforced here; callers filter by the character of W.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    B, n = X.shape
    if steps is None:
        steps = 96
    lo = field.window.bounds[:, 0]
    hi = field.window.bounds[:, 1]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * guard_factor
    guard = (mid - half, mid + half)

    W = (Y - X) if starts_from is None else np.array(starts_from, float)
    ok = np.zeros(B, bool)
    res_norm = np.full(B, np.inf)

    for _ in range(max_iter):
        active = ~ok
        if not np.any(active):
            break
        Xa, Ya, Wa = X[active], Y[active], W[active]
        Ea, _, valid = _integrate_endpoints(field, Xa, Wa, 1.0, steps, guard)
        r = Ea - Ya
        rn = np.linalg.norm(r, axis=-1)
        rn[~valid] = np.inf
        # forward-difference Jacobian, one integration per coordinate
        J = np.empty((Xa.shape[0], n, n))
        delta = 1e-6 * (1.0 + np.linalg.norm(Wa, axis=-1))
        for i in range(n):
            Wp = Wa.copy()
            Wp[:, i] += delta
            Ep, _, vp = _integrate_endpoints(field, Xa, Wp, 1.0, steps, guard)
            J[:, :, i] = (Ep - Ea) / delta[:, None]
        good = valid & np.isfinite(J).all(axis=(1, 2))
        dW = np.zeros_like(Wa)
        if np.any(good):
            try:
                dW[good] = np.linalg.solve(J[good], -r[good][..., None])[..., 0]
            except np.linalg.LinAlgError:
                for b in np.nonzero(good)[0]:
                    try:
                        dW[b] = np.linalg.solve(J[b], -r[b])
                    except np.linalg.LinAlgError:
                        dW[b] = 0.0
        # damped update with two backtracking levels
        improved = np.zeros(Xa.shape[0], bool)
        Wnew = Wa.copy()
        for lam in (1.0, 0.5, 0.25):
            trial = Wa + lam * dW
            Et, _, vt = _integrate_endpoints(field, Xa, trial, 1.0, steps, guard)
            tn = np.linalg.norm(Et - Ya, axis=-1)
            tn[~vt] = np.inf
            take = ~improved & (tn < rn)
            Wnew[take] = trial[take]
            rn = np.where(take, tn, rn)
            improved |= take
            if np.all(improved):
                break
        W[active] = Wnew
        res_norm[active] = rn
        ok[active] = rn <= tol

    q = field.norm2(X, W)
    proper = np.sqrt(np.clip(q, 0.0, None))
    return W, proper, ok & (res_norm <= tol)


def causal_filter(field, X, W, proper, ok, aux=None, timelike_only=False):
    """Proper times of converged future-causal shots; NaN elsewhere."""
    aux = aux or AuxRiemannianField()
    q = field.norm2(X, W)
    F = field.orientation(X)
    future = field.inner(X, W, F) >= 0.0
    band = NULL_TOL * aux.norm2(X, W)
    causal = (q > band) if timelike_only else (q >= -band)
    zerop = np.all(W == 0.0, axis=-1)
    good = ok & ((causal & future) | zerop)
    return np.where(good, proper, np.nan)


def shoot(field, x, y, tol=1e-9, steps=None, samples=65,
          check_relation=True, classify_maximizing=True, aux=None):
    """A causal geodesic from x to y, found by multi-start Newton shooting.

    Ties among converged causal candidates are broken by maximal proper
    time, then by lexicographic initial direction.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    field.window.require_inside(x)
    field.window.require_inside(y)
    aux = aux or AuxRiemannianField()

    starts = _fan_starts(field, x, y)
    candidates = []
    for w0 in starts:
        W, proper, ok = shoot_batch(field, x[None], y[None], tol=tol,
                                    steps=steps, starts_from=w0[None])
        if not ok[0]:
            continue
        w = W[0]
        char = causal_character(field, x, w, aux=aux)
        if char.startswith("future"):
            candidates.append((float(proper[0]), tuple(w), w, char))
    if not candidates:
        if check_relation:
            from .timesep import causally_related
            rel = causally_related(field, x, y)
            if rel == "unrelated":
                raise NotCausallyRelated(
                    f"{y.tolist()} is not in the causal future of {x.tolist()}")
        raise NoConnection("no causal geodesic found from any start")

    candidates.sort(key=lambda c: (-c[0], c[1]))
    proper_time, _, w, char = candidates[0]

    ts = np.linspace(0.0, 1.0, samples)
    pts = np.empty((samples, field.dim))
    vels = np.empty((samples, field.dim))
    pts[0], vels[0] = x, w
    xc, vc = x[None].copy(), w[None].copy()
    h = 1.0 / (samples - 1)
    for k in range(1, samples):
        xc, vc = _rk4_step(field, xc, vc, h)
        pts[k], vels[k] = xc[0], vc[0]
    q = field.norm2(pts, vels)
    drift = float(np.max(np.abs(q - q[0])))
    curve = CausalCurve(ts, pts, vels, char, drift,
                        meta={"proper_time": proper_time,
                              "endpoint_error": float(np.linalg.norm(pts[-1] - y))})
    if classify_maximizing:
        verdict, _ = is_maximizer(field, curve, samples=4,
                                  tol=max(tol * 100, 1e-6))
        curve.maximizing = verdict
    return curve


# ---------------------------------------------------------------------------
# Compactness experiments
# ---------------------------------------------------------------------------

def compactness_experiment(field, seeds, lam, step, cluster_tol=1e-3,
                           aux=None):
    """Integrate a family of seed states and report C1 statistics.

    seeds: sequence of (x, v) pairs.  The report carries uniform velocity
    and acceleration bounds, pairwise C1 distances on the common window of
    existence, greedy clusters at cluster_tol, and whether the family is a
    numerically Cauchy chain in its given order.
    """
    aux = aux or AuxRiemannianField()
    curves = []
    for x, v in seeds:
        curves.append(integrate_geodesic(field, x, v, lam, step, aux=aux))
    t_common = min(c.params[-1] for c in curves)
    grid = np.linspace(0.0, t_common, 33)

    P = np.stack([np.stack(c.sample(grid), axis=0) for c in curves])
    # P[i, 0] = points, P[i, 1] = velocities, each (33, n)
    vel_bound = 0.0
    acc_bound = 0.0
    for c in curves:
        vel_bound = max(vel_bound, float(np.max(
            np.sqrt(aux.norm2(c.points, c.velocities)))))
        acc = _acceleration(field, c.points, c.velocities)
        acc_bound = max(acc_bound, float(np.max(np.sqrt(aux.norm2(c.points, acc)))))

    m = len(curves)
    dist = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            dp = np.max(np.linalg.norm(P[i, 0] - P[j, 0], axis=-1))
            dv = np.max(np.linalg.norm(P[i, 1] - P[j, 1], axis=-1))
            dist[i, j] = dist[j, i] = dp + dv

    labels = -np.ones(m, int)
    nclusters = 0
    for i in range(m):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = nclusters
        while stack:
            k = stack.pop()
            for j in range(m):
                if labels[j] < 0 and dist[k, j] <= cluster_tol:
                    labels[j] = nclusters
                    stack.append(j)
        nclusters += 1

    successive = [float(dist[i, i + 1]) for i in range(m - 1)]
    cauchy = all(successive[k + 1] <= successive[k] + cluster_tol
                 for k in range(len(successive) - 1)) if len(successive) > 1 else True

    return {
        "n_curves": m,
        "common_span": float(t_common),
        "uniform_velocity_bound": vel_bound,
        "uniform_acceleration_bound": acc_bound,
        "max_pairwise_c1": float(np.max(dist)) if m > 1 else 0.0,
        "successive_c1": successive,
        "cauchy_chain": bool(cauchy),
        "clusters": [int(labels[i]) for i in range(m)],
        "n_clusters": int(nclusters),
        "norm_drifts": [float(c.norm_drift) for c in curves],
        "exited": [bool(c.exited) for c in curves],
    }
