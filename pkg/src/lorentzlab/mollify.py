"""Causality-controlled smooth approximations of C1 metrics.

The approximation is a chartwise convolution followed by a cone-narrowing
correction: subtracting a small multiple of the squared time-orientation
covector strictly shrinks light cones, and the multiple is calibrated
from the measured convolution error, then verified by cone sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .chart import AuxRiemannianField, MetricField, WeightField
from .curvature import classical_bakry_emery
from .errors import CollarTooThin, ConeNarrowingFailed
from .fields import fd_gradient, fd_hessian, gauss_legendre

__all__ = ["Mollifier", "GoodApproximation", "good_approximation",
           "curvature_degradation"]


class Mollifier:
    """Polynomial bump kernel (1 - |z/eps|^2)^4 on the eps-ball.

    The tensor-Gauss discretization is renormalized to unit mass, so
    convolving a constant reproduces it exactly.
    """

    def __init__(self, dim, eps, points_per_axis=10):
        self.dim = dim
        self.eps = float(eps)
        nodes_w = [gauss_legendre(points_per_axis, -self.eps, self.eps)
                   for _ in range(dim)]
        grids = np.meshgrid(*[nw[0] for nw in nodes_w], indexing="ij")
        self.nodes = np.stack(grids, axis=-1).reshape(-1, dim)
        wmesh = np.meshgrid(*[ww for _, ww in nodes_w], indexing="ij")
        w = np.ones(self.nodes.shape[0])
        for wm in wmesh:
            w = w * wm.reshape(-1)
        rho = self._kernel(self.nodes)
        raw = w * rho
        norm = float(np.sum(raw))
        self.mass_defect = abs(norm - self._exact_mass())
        self.weights = raw / norm
        # kernel-gradient weights for one extra derivative, sharing the
        # mass normalization; discrete zero mean is enforced exactly
        grad = self._kernel_gradient(self.nodes)
        gw = w[:, None] * grad / norm
        gw -= np.mean(gw, axis=0, keepdims=True)
        self.grad_weights = gw

    def _kernel(self, z):
        u2 = np.einsum("...i,...i->...", z, z) / self.eps ** 2
        q = np.clip(1.0 - u2, 0.0, None)
        return q ** 4

    def _kernel_gradient(self, z):
        u2 = np.einsum("...i,...i->...", z, z) / self.eps ** 2
        q = np.clip(1.0 - u2, 0.0, None)
        return (4.0 * q ** 3 * (-2.0 / self.eps ** 2))[..., None] * z

    def _exact_mass(self):
        # int over the eps-ball of (1 - |z/eps|^2)^4 dz
        import math
        n = self.dim
        surf = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
        radial = sum((-1) ** k * math.comb(4, k) / (n + 2 * k) for k in range(5))
        return surf * radial * self.eps ** n

    def convolve(self, fn, x):
        """(fn * rho)(x) for a batched field fn of any tensor tail shape."""
        x = np.asarray(x, float)
        batch = x.shape[:-1]
        pts = x[..., None, :] - self.nodes            # (..., Q, n)
        vals = fn(pts.reshape(-1, self.dim))
        tail = vals.shape[1:]
        vals = vals.reshape(batch + (self.nodes.shape[0],) + tail)
        w = self.weights.reshape((1,) * len(batch) + (-1,) + (1,) * len(tail))
        return np.sum(vals * w, axis=len(batch))

    def convolve_gradient(self, fn, x):
        """d_b (fn * rho)(x) = (fn * d_b rho)(x), one derivative gained."""
        x = np.asarray(x, float)
        batch = x.shape[:-1]
        pts = x[..., None, :] - self.nodes
        vals = fn(pts.reshape(-1, self.dim))
        tail = vals.shape[1:]
        vals = vals.reshape(batch + (self.nodes.shape[0],) + tail)
        out = np.empty(batch + (self.dim,) + tail, float)
        for b in range(self.dim):
            w = self.grad_weights[:, b].reshape(
                (1,) * len(batch) + (-1,) + (1,) * len(tail))
            out[(Ellipsis, b) + (slice(None),) * len(tail)] = \
                np.sum(vals * w, axis=len(batch))
        return out


@dataclass
class GoodApproximation:
    """A smooth metric with strictly narrower cones than the base metric."""

    base: MetricField
    eps: float
    smoothed: MetricField            # corrected field on the inner window
    convolved: MetricField           # pure convolution, no cone correction
    correction: float                # coefficient of the F-flat square
    weight_eps: WeightField
    margin_report: dict
    c1_error: dict
    meta: dict = dc_field(default_factory=dict)

    def second_deriv(self, x):
        """d_l d_k of the corrected smooth metric, from the convolution of
        the first-derivative data with the kernel gradient."""
        return self._second_deriv(x)


def _orthonormal_pair(gmat, F, axis):
    """Unit timelike leg along F and a unit spatial leg along a coordinate
    axis, orthonormalized for the (batched) metric gmat."""
    T = F / np.sqrt(np.einsum("...ij,...i,...j->...", gmat, F, F))[..., None]
    e = np.zeros(F.shape, float)
    e[..., axis] = 1.0
    gT = np.einsum("...ij,...j->...i", gmat, T)
    e = e - np.einsum("...i,...i->...", e, gT)[..., None] * T
    q = np.einsum("...ij,...i,...j->...", gmat, e, e)
    ok = np.abs(q) > 1e-14
    e = np.where(ok[..., None], e / np.sqrt(np.abs(np.where(ok, q, 1.0)))[..., None], 0.0)
    return T, e, ok


def _null_fan(field_eval, orientation, pts, dim):
    """Coordinate data of nominally null vectors for the metric field_eval:
    T +/- E over every spatial axis."""
    g = field_eval(pts)
    F = orientation(pts)
    fans = []
    for a in range(1, dim):
        T, E, ok = _orthonormal_pair(g, F, a)
        if not np.all(ok):
            continue
        fans.append(T + E)
        fans.append(T - E)
    return np.stack(fans, axis=0) if fans else np.zeros((0,) + pts.shape)


def good_approximation(field: MetricField, V: WeightField, eps,
                       kernel_points=10, sample_per_axis=7,
                       max_retries=4, aux=None) -> GoodApproximation:
    """Convolve the metric and narrow its cones below the base cones.

    The corrected metric is (g * rho) - c F_flat (x) F_flat with F_flat the
    metric dual of the normalized orientation field.  c starts at twice the
    measured sup-norm convolution error over the cone-margin constant and
    doubles on verification failure, up to max_retries.
    """
    window = field.window
    n = field.dim
    aux = aux or AuxRiemannianField()
    margin = float(np.min(window.bounds[:, 1] - window.bounds[:, 0])) / 2.0
    if eps >= margin:
        raise CollarTooThin(f"eps {eps} leaves no collar in the window")
    try:
        inner = window.shrunk(eps * 1.0001)
    except ValueError:
        raise CollarTooThin(f"eps {eps} leaves no collar in the window")

    moll = Mollifier(n, eps, kernel_points)

    def conv_eval(x):
        return moll.convolve(lambda p: field.eval(p, check=False), x)

    def conv_deriv(x):
        return moll.convolve(lambda p: field.deriv(p, check=False), x)

    # normalized orientation covector field and its square
    def fflat_square(x):
        g = field.eval(x, check=False)
        F = field.orientation(x)
        q = np.einsum("...ij,...i,...j->...", g, F, F)
        fl = np.einsum("...ij,...j->...i", g, F) / np.sqrt(q)[..., None]
        return np.einsum("...i,...j->...ij", fl, fl)

    fd_step = max(1e-5, 1e-3 * eps)

    def dfflat_square(x):
        x = np.asarray(x, float)
        out = np.empty(x.shape[:-1] + (n, n, n), float)
        for k in range(n):
            e = np.zeros(n)
            e[k] = fd_step
            out[..., k, :, :] = (fflat_square(x + e) - fflat_square(x - e)) \
                / (2 * fd_step)
        return out

    # sample lattice on the inner window
    axes = [np.linspace(inner.bounds[i, 0], inner.bounds[i, 1],
                        sample_per_axis) for i in range(n)]
    samples = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)

    g_s = field.eval(samples, check=False)
    dg_s = field.deriv(samples, check=False)
    gc_s = conv_eval(samples)
    dgc_s = conv_deriv(samples)
    e0 = float(np.max(np.abs(np.linalg.eigvalsh(gc_s - g_s))))
    e1 = 0.0
    for k in range(n):
        e1 = max(e1, float(np.max(np.abs(np.linalg.eigvalsh(
            dgc_s[:, k] - dg_s[:, k])))))

    # cone-margin constant: smallest squared F-flat pairing over base-null
    # directions (normalized to unit background norm)
    fans = _null_fan(lambda p: field.eval(p, check=False),
                     field.orientation, samples, n)
    Fm = field.orientation(samples)
    qF = np.einsum("...ij,...i,...j->...", g_s, Fm, Fm)
    fl = np.einsum("...ij,...j->...i", g_s, Fm) / np.sqrt(qF)[..., None]
    m0 = np.inf
    for v in fans:
        vn = v / np.sqrt(aux.norm2(samples, v))[..., None]
        m0 = min(m0, float(np.min(np.einsum("...i,...i->...", fl, vn) ** 2)))
    if not np.isfinite(m0) or m0 <= 0:
        m0 = 0.25
    gscale = float(np.max(np.abs(g_s)))
    c = max(2.0 * e0 / m0, 1e-9 * gscale)

    report = None
    for _ in range(max_retries + 1):
        def s_eval(x, _c=c):
            return conv_eval(x) - _c * fflat_square(x)

        def s_deriv(x, _c=c):
            return conv_deriv(x) - _c * dfflat_square(x)

        smoothed = MetricField(inner, s_eval, s_deriv, field._orient,
                               "smooth", name=field.name + f"-eps{eps:g}")
        # verify: every sampled smoothed-null direction is base-timelike
        fans_eps = _null_fan(lambda p: s_eval(p), field.orientation,
                             samples, n)
        margins = []
        ok = True
        for v in fans_eps:
            qv = np.einsum("...ij,...i,...j->...", g_s, v, v)
            margins.append(qv / aux.norm2(samples, v))
            ok &= bool(np.all(qv > 0.0))
        if ok:
            min_margin = float(np.min(np.stack(margins))) if margins else np.nan
            report = {"min_margin": min_margin,
                      "n_directions": int(len(fans_eps)),
                      "n_samples": int(samples.shape[0])}
            break
        c *= 2.0
    if report is None:
        raise ConeNarrowingFailed(
            f"cone narrowing failed after {max_retries} retries at eps {eps}")

    def v_eval(x):
        return moll.convolve(lambda p: V.eval(p), x)

    def v_deriv(x):
        return moll.convolve(lambda p: V.deriv(p), x)

    weight_eps = WeightField(v_eval, v_deriv, V.synthetic_dim, n,
                             name=V.name + f"-eps{eps:g}")

    # corrected second derivatives: convolution derivative of the first
    # derivatives plus a finite-difference pass over the correction tensor
    def second_deriv(x, _c=c):
        core = moll.convolve_gradient(lambda p: field.deriv(p, check=False), x)
        x = np.asarray(x, float)
        corr = np.empty(x.shape[:-1] + (n, n, n, n), float)
        for l in range(n):
            e = np.zeros(n)
            e[l] = fd_step
            corr[..., l, :, :, :] = (dfflat_square(x + e)
                                     - dfflat_square(x - e)) / (2 * fd_step)
        return core - _c * corr

    ga = GoodApproximation(
        base=field, eps=float(eps), smoothed=smoothed,
        convolved=MetricField(inner, conv_eval, conv_deriv, field._orient,
                              "smooth", name=field.name + "-conv"),
        correction=float(c), weight_eps=weight_eps,
        margin_report=report,
        c1_error={"sup_metric": e0, "sup_metric_deriv": e1,
                  "mass_defect": moll.mass_defect},
        meta={"kernel_points": kernel_points,
              "samples_per_axis": sample_per_axis})
    ga._second_deriv = second_deriv
    ga._weight_second_deriv = lambda x: moll.convolve_gradient(
        lambda p: V.deriv(p), x)
    return ga


def curvature_degradation(approx: GoodApproximation, N, K, region,
                          rapidities=(0.0, 0.5, 1.0, 1.5),
                          samples_per_axis=5):
    """Worst deficit of the smooth weighted curvature below K on a region.

    Samples unit timelike boosts v of the orientation field and reports
    delta = max over samples of [K g_eps(v,v) - Ric^(eps,N,V_eps)(v,v)]_+
    per unit g_eps(v,v).
    """
    sm = approx.smoothed
    n = sm.dim
    region = np.asarray(region, float)
    axes = [np.linspace(region[i, 0], region[i, 1], samples_per_axis)
            for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)

    g = sm.eval(pts, check=False)
    dg = sm.deriv(pts, check=False)
    d2g = approx.second_deriv(pts)
    dV = approx.weight_eps.deriv(pts)
    d2V = approx._weight_second_deriv(pts)
    be = classical_bakry_emery(g, dg, d2g, dV, d2V,
                               float(N), n)

    F = sm.orientation(pts)
    delta = 0.0
    worst = None
    for a in range(1, n):
        T, E, ok = _orthonormal_pair(g, F, a)
        for rap in rapidities:
            vs = [np.cosh(rap) * T + np.sinh(rap) * E]
            if rap != 0.0:
                vs.append(np.cosh(rap) * T - np.sinh(rap) * E)
            for v in vs:
                ric_vv = np.einsum("...ij,...i,...j->...", be, v, v)
                g_vv = np.einsum("...ij,...i,...j->...", g, v, v)
                deficit = (K * g_vv - ric_vv) / g_vv
                i = int(np.argmax(deficit))
                if float(deficit[i]) > delta:
                    delta = float(deficit[i])
                    worst = {"point": pts[i].tolist(), "rapidity": float(rap),
                             "axis": a}
    return {"eps": approx.eps, "c": approx.correction,
            "c1_error": approx.c1_error,
            "min_margin": approx.margin_report["min_margin"],
            "delta": float(delta), "argmax": worst, "K": float(K),
            "N": float(N)}
