"""Coordinate chart windows, metric fields, weights, and test data.

A metric field exposes the metric components g_ij and exactly their first
derivatives d_k g_ij.  Nothing in this package requests second derivatives
of g through this interface; second-order quantities are obtained by
integration by parts (connection module) or by mollification (mollify
module).

Index conventions for arrays returned by fields:
    eval(x)  -> (..., n, n)      g[i, j]
    deriv(x) -> (..., n, n, n)   dg[k, i, j] = d_k g_ij
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import OutOfWindow

__all__ = [
    "ChartWindow",
    "MetricField",
    "WeightField",
    "AuxRiemannianField",
    "TestData",
    "eval_metric",
    "causal_character",
    "catalog",
    "catalog_names",
    "load_metric_csv",
    "dump_metric_csv",
]


# ---------------------------------------------------------------------------
# Chart window
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartWindow:
    """A closed coordinate box with a tensor grid on it."""

    dim: int
    bounds: np.ndarray          # (n, 2) per-axis [lo, hi]
    grid_shape: tuple           # points per axis, each >= 3

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.shape != (self.dim, 2):
            raise ValueError(f"bounds must be ({self.dim}, 2), got {bounds.shape}")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("window bounds must be nondegenerate")
        shape = tuple(int(s) for s in self.grid_shape)
        if len(shape) != self.dim or any(s < 3 for s in shape):
            raise ValueError("grid_shape needs >= 3 points per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "grid_shape", shape)

    @classmethod
    def cube(cls, dim, half_width, grid_points):
        b = np.array([[-half_width, half_width]] * dim, float)
        return cls(dim, b, (grid_points,) * dim)

    def axes(self):
        return [np.linspace(self.bounds[i, 0], self.bounds[i, 1], self.grid_shape[i])
                for i in range(self.dim)]

    @property
    def spacing(self):
        return np.array([(self.bounds[i, 1] - self.bounds[i, 0]) / (self.grid_shape[i] - 1)
                         for i in range(self.dim)])

    def contains(self, x, tol=0.0):
        x = np.asarray(x, float)
        lo = self.bounds[:, 0] - tol
        hi = self.bounds[:, 1] + tol
        return bool(np.all(x >= lo) and np.all(x <= hi)) if x.ndim == 1 else \
            np.all((x >= lo) & (x <= hi), axis=-1)

    def require_inside(self, x, tol=1e-12):
        inside = self.contains(x, tol=tol)
        if not np.all(inside):
            raise OutOfWindow(f"point outside window bounds {self.bounds.tolist()}")

    def grid_points(self):
        """All grid nodes as an array of shape grid_shape + (dim,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def shrunk(self, margin):
        b = self.bounds.copy()
        b[:, 0] += margin
        b[:, 1] -= margin
        if np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("margin eats the whole window")
        return ChartWindow(self.dim, b, self.grid_shape)

    def enlarged(self, bounds, grid_shape=None):
        return ChartWindow(self.dim, np.asarray(bounds, float),
                           grid_shape or self.grid_shape)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


class MetricField:
    """Lorentzian metric with first-derivative data on a chart window.

    Parameters
    ----------
    window : ChartWindow
    eval_fn : callable
        Batched (..., n) -> (..., n, n), symmetric, signature (+,-,...,-).
    deriv_fn : callable
        Batched (..., n) -> (..., n, n, n), deriv[k, i, j] = d_k g_ij.
    orientation_fn : callable or None
        Time-orientation field F with g(F, F) > 0.  Defaults to e_0.
    regularity_tag : {"smooth", "C1"}
    """

    def __init__(self, window, eval_fn, deriv_fn, orientation_fn=None,
                 regularity_tag="smooth", name="custom"):
        if regularity_tag not in ("smooth", "C1"):
            raise ValueError("regularity_tag must be 'smooth' or 'C1'")
        self.window = window
        self._eval = eval_fn
        self._deriv = deriv_fn
        self._orient = orientation_fn
        self.regularity_tag = regularity_tag
        self.name = name

    @property
    def dim(self):
        return self.window.dim

    def eval(self, x, check=True):
        xb, single = _as_batch(x)
        if check:
            self.window.require_inside(xb)
        g = np.asarray(self._eval(xb), float)
        return g[0] if single else g

    def deriv(self, x, check=True):
        xb, single = _as_batch(x)
        if check:
            self.window.require_inside(xb)
        dg = np.asarray(self._deriv(xb), float)
        return dg[0] if single else dg

    def orientation(self, x):
        xb, single = _as_batch(x)
        if self._orient is None:
            F = np.zeros(xb.shape, float)
            F[..., 0] = 1.0
        else:
            F = np.asarray(self._orient(xb), float)
        return F[0] if single else F

    def norm2(self, x, v, check=False):
        """g_x(v, v), batched over leading axes."""
        g = self.eval(x, check=check)
        v = np.asarray(v, float)
        return np.einsum("...ij,...i,...j->...", g, v, v)

    def inner(self, x, v, w, check=False):
        g = self.eval(x, check=check)
        return np.einsum("...ij,...i,...j->...",
                         g, np.asarray(v, float), np.asarray(w, float))

    def reversed_time(self):
        """Same metric with the opposite time orientation."""
        orient = self._orient

        def flipped(x):
            if orient is None:
                F = np.zeros(np.asarray(x).shape, float)
                F[..., 0] = 1.0
            else:
                F = np.asarray(orient(x), float)
            return -F

        out = MetricField(self.window, self._eval, self._deriv, flipped,
                          self.regularity_tag, name=self.name + "-reversed")
        return out

    def with_window(self, window):
        return MetricField(window, self._eval, self._deriv, self._orient,
                           self.regularity_tag, name=self.name)


class WeightField:
    """Scalar weight V with first derivatives and synthetic dimension N."""

    def __init__(self, eval_fn, deriv_fn, synthetic_dim, dim, name="weight"):
        if synthetic_dim < dim:
            raise ValueError("synthetic dimension must satisfy N >= dim")
        self._eval = eval_fn
        self._deriv = deriv_fn
        self.synthetic_dim = float(synthetic_dim)
        self.dim = dim
        self.name = name

    @classmethod
    def zero(cls, dim, synthetic_dim=None):
        N = dim if synthetic_dim is None else synthetic_dim

        def v(x):
            return np.zeros(np.asarray(x).shape[:-1], float)

        def dv(x):
            return np.zeros(np.asarray(x).shape, float)

        return cls(v, dv, N, dim, name="zero")

    def eval(self, x):
        xb, single = _as_batch(x)
        v = np.asarray(self._eval(xb), float)
        return float(v[0]) if single else v

    def deriv(self, x):
        xb, single = _as_batch(x)
        dv = np.asarray(self._deriv(xb), float)
        return dv[0] if single else dv

    def is_zero_on(self, window, tol=0.0):
        pts = window.grid_points().reshape(-1, window.dim)
        return float(np.max(np.abs(self.eval(pts)))) <= tol


class AuxRiemannianField:
    """Auxiliary positive-definite background metric, default Euclidean."""

    def __init__(self, eval_fn=None, dim=None):
        self._eval = eval_fn
        self.dim = dim

    def eval(self, x):
        xb, single = _as_batch(x)
        if self._eval is None:
            n = xb.shape[-1]
            g = np.broadcast_to(np.eye(n), xb.shape[:-1] + (n, n)).copy()
        else:
            g = np.asarray(self._eval(xb), float)
        return g[0] if single else g

    def norm2(self, x, v):
        g = self.eval(x)
        v = np.asarray(v, float)
        return np.einsum("...ij,...i,...j->...", g, v, v)


# ---------------------------------------------------------------------------
# Test vector fields and densities
# ---------------------------------------------------------------------------

def _unit_ball_bump_integral(n, power=4):
    # int over unit n-ball of (1 - |u|^2)^power, exact.
    surf = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    radial = sum((-1) ** k * math.comb(power, k) / (n + 2 * k)
                 for k in range(power + 1))
    return surf * radial


@dataclass
class TestData:
    """A test vector field and/or a compactly supported density.

    The density is the polynomial bump amp*(1 - |x-c|^2/r^2)^4 on the ball
    of radius r, normalized to unit coordinate-volume mass by default.
    """

    __test__ = False  # not a pytest class despite the name

    vector_field: Optional[Callable] = None     # (..., n) -> (..., n)
    vector_deriv: Optional[Callable] = None     # (..., n) -> (..., n, n), [k, i] = d_k X^i
    density: Optional[Callable] = None          # (..., n) -> (...)
    density_deriv: Optional[Callable] = None    # (..., n) -> (..., n)
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    @classmethod
    def bump(cls, center, radius, mass=1.0):
        center = np.asarray(center, float)
        n = center.shape[0]
        amp = mass / (_unit_ball_bump_integral(n) * radius ** n)

        def mu(x):
            u = (np.asarray(x, float) - center) / radius
            q = 1.0 - np.einsum("...i,...i->...", u, u)
            return amp * np.where(q > 0.0, q, 0.0) ** 4

        def dmu(x):
            x = np.asarray(x, float)
            u = (x - center) / radius
            q = 1.0 - np.einsum("...i,...i->...", u, u)
            qp = np.where(q > 0.0, q, 0.0)
            coef = amp * 4.0 * qp ** 3 * (-2.0 / radius ** 2)
            return coef[..., None] * (x - center)

        return cls(density=mu, density_deriv=dmu, center=center, radius=radius,
                   meta={"mass": mass})

    @classmethod
    def constant_vector(cls, v):
        v = np.asarray(v, float)

        def X(x):
            return np.broadcast_to(v, np.asarray(x).shape).copy()

        def dX(x):
            shp = np.asarray(x).shape
            return np.zeros(shp[:-1] + (shp[-1], shp[-1]), float)

        return cls(vector_field=X, vector_deriv=dX, meta={"constant": v.tolist()})

    @classmethod
    def vector(cls, fn, deriv_fn=None, fd_step=1e-5):
        if deriv_fn is None:
            def deriv_fn(x, _fn=fn, _h=fd_step):
                x = np.asarray(x, float)
                n = x.shape[-1]
                out = np.empty(x.shape[:-1] + (n, n), float)
                for k in range(n):
                    e = np.zeros(n)
                    e[k] = _h
                    out[..., k, :] = (_fn(x + e) - _fn(x - e)) / (2 * _h)
                return out
        return cls(vector_field=fn, vector_deriv=deriv_fn)


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------

def eval_metric(field, x):
    """Return (g_ij(x), d_k g_ij(x)); raises OutOfWindow outside bounds."""
    field.window.require_inside(np.asarray(x, float))
    return field.eval(x, check=False), field.deriv(x, check=False)


NULL_TOL = 1e-6  # |g(v,v)| below NULL_TOL * |v|^2_aux counts as null


def causal_character(field, x, v, aux=None):
    """Classify v at x as one of future-timelike, past-timelike,
    future-null, past-null, spacelike, zero."""
    v = np.asarray(v, float)
    aux = aux or AuxRiemannianField()
    v2_aux = float(aux.norm2(x, v))
    if v2_aux == 0.0:
        return "zero"
    q = float(field.norm2(x, v, check=True))
    F = field.orientation(x)
    toward_future = float(field.inner(x, v, F)) >= 0.0
    if abs(q) < NULL_TOL * v2_aux:
        return "future-null" if toward_future else "past-null"
    if q > 0.0:
        return "future-timelike" if toward_future else "past-timelike"
    return "spacelike"


def _character_batch(field, x, v, aux=None):
    v = np.asarray(v, float)
    aux = aux or AuxRiemannianField()
    v2_aux = aux.norm2(x, v)
    q = field.norm2(x, v)
    F = field.orientation(x)
    future = field.inner(x, v, F) >= 0.0
    out = np.full(q.shape, "spacelike", dtype=object)
    null = np.abs(q) < NULL_TOL * v2_aux
    timelike = (q > 0.0) & ~null
    out[null & future] = "future-null"
    out[null & ~future] = "past-null"
    out[timelike & future] = "future-timelike"
    out[timelike & ~future] = "past-timelike"
    out[v2_aux == 0.0] = "zero"
    return out


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

@dataclass
class CatalogEntry:
    """A catalog metric plus closed-form extras used by experiments.

    classical_ricci, when present, returns the curvature tensor of the
    smooth entry computed from its closed form; it is deliberately not
    part of the MetricField interface.
    """

    name: str
    field: MetricField
    weight: WeightField
    line_point: Optional[Callable] = None        # t -> point, proper-time line
    line_velocity: Optional[Callable] = None     # t -> tangent
    classical_ricci: Optional[Callable] = None   # x (..., n) -> (..., n, n)
    params: dict = dc_field(default_factory=dict)


def _diag_metric(diag_fn, ddiag_fn):
    """Build batched eval/deriv callables from diagonal closed forms.

    diag_fn(x) -> (..., n) diagonal entries; ddiag_fn(x) -> (..., n, n)
    with [k, i] = d_k of diagonal entry i.
    """

    def ev(x):
        d = np.asarray(diag_fn(x), float)
        n = d.shape[-1]
        g = np.zeros(d.shape + (n,), float)
        idx = np.arange(n)
        g[..., idx, idx] = d
        return g

    def dv(x):
        dd = np.asarray(ddiag_fn(x), float)
        n = dd.shape[-1]
        out = np.zeros(dd.shape + (n,), float)
        idx = np.arange(n)
        out[..., :, idx, idx] = dd
        return out

    return ev, dv


def _minkowski(window, params):
    n = window.dim

    def diag(x):
        d = np.full(np.asarray(x).shape, -1.0)
        d[..., 0] = 1.0
        return d

    def ddiag(x):
        shp = np.asarray(x).shape
        return np.zeros(shp[:-1] + (shp[-1], shp[-1]), float)

    ev, dv = _diag_metric(diag, ddiag)
    fld = MetricField(window, ev, dv, None, "smooth", name="minkowski")

    def ric(x):
        shp = np.asarray(x).shape
        return np.zeros(shp[:-1] + (shp[-1], shp[-1]), float)

    return CatalogEntry("minkowski", fld, WeightField.zero(n),
                        line_point=_vertical_line(n),
                        line_velocity=_vertical_velocity(n),
                        classical_ricci=ric, params=dict(params))


def _vertical_line(n, spatial=None):
    spatial = np.zeros(n - 1) if spatial is None else np.asarray(spatial, float)

    def gamma(t):
        t = np.asarray(t, float)
        out = np.empty(t.shape + (n,), float)
        out[..., 0] = t
        out[..., 1:] = spatial
        return out

    return gamma


def _vertical_velocity(n):
    def gamma_dot(t):
        t = np.asarray(t, float)
        out = np.zeros(t.shape + (n,), float)
        out[..., 0] = 1.0
        return out

    return gamma_dot


def _flrw(window, params, kind):
    """g = dt^2 - a(t)^2 (dx^2 + ...), a = exp t or cosh t."""
    n = window.dim

    if kind == "exp":
        a_fn, da_fn, dda_fn = np.exp, np.exp, np.exp
    else:
        a_fn, da_fn, dda_fn = np.cosh, np.sinh, np.cosh

    def diag(x):
        t = np.asarray(x, float)[..., 0]
        a2 = a_fn(t) ** 2
        d = np.empty(np.asarray(x).shape, float)
        d[..., 0] = 1.0
        d[..., 1:] = -a2[..., None]
        return d

    def ddiag(x):
        x = np.asarray(x, float)
        t = x[..., 0]
        shp = x.shape
        out = np.zeros(shp[:-1] + (shp[-1], shp[-1]), float)
        # only d_t of the spatial entries is nonzero: d_t(-a^2) = -2 a a'
        out[..., 0, 1:] = (-2.0 * a_fn(t) * da_fn(t))[..., None]
        return out

    ev, dv = _diag_metric(diag, ddiag)
    fld = MetricField(window, ev, dv, None, "smooth", name=f"flrw-{kind}")

    def ric(x):
        # Closed form for the warped product dt^2 - a(t)^2 delta:
        #   Ric_tt = -(n-1) a''/a,  Ric_xx = a a'' + (n-2) a'^2  (each axis)
        x = np.asarray(x, float)
        t = x[..., 0]
        a, da, dda = a_fn(t), da_fn(t), dda_fn(t)
        m = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (m, m), float)
        out[..., 0, 0] = -(m - 1) * dda / a
        idx = np.arange(1, m)
        out[..., idx, idx] = (a * dda + (m - 2) * da ** 2)[..., None]
        return out

    return CatalogEntry(f"flrw-{kind}", fld, WeightField.zero(n),
                        line_point=_vertical_line(n),
                        line_velocity=_vertical_velocity(n),
                        classical_ricci=ric, params=dict(params))


def _product(window, params, spatial_kind):
    """g = dt^2 - h, h flat or a hyperbolic-disk patch (curvature -1)."""
    n = window.dim

    def h_conformal(y):
        # h_ab = w(y)^2 delta_ab with w = 2 / (1 - |y|^2)
        r2 = np.einsum("...i,...i->...", y, y)
        return 2.0 / (1.0 - r2)

    def diag(x):
        x = np.asarray(x, float)
        d = np.empty(x.shape, float)
        d[..., 0] = 1.0
        if spatial_kind == "flat":
            d[..., 1:] = -1.0
        else:
            w = h_conformal(x[..., 1:])
            d[..., 1:] = -(w ** 2)[..., None]
        return d

    def ddiag(x):
        x = np.asarray(x, float)
        shp = x.shape
        out = np.zeros(shp[:-1] + (shp[-1], shp[-1]), float)
        if spatial_kind != "flat":
            y = x[..., 1:]
            r2 = np.einsum("...i,...i->...", y, y)
            w = 2.0 / (1.0 - r2)
            # d_k (-w^2) = -2 w * dw/dy_k, dw/dy_k = w^2 y_k
            dw = (w ** 2)[..., None] * y
            out[..., 1:, 1:] = (-2.0 * w[..., None] * dw)[..., :, None] * \
                np.ones(shp[-1] - 1)
        return out

    ev, dv = _diag_metric(diag, ddiag)
    name = f"product-{spatial_kind}"
    fld = MetricField(window, ev, dv, None, "smooth", name=name)

    def ric(x):
        x = np.asarray(x, float)
        m = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (m, m), float)
        if spatial_kind != "flat" and m >= 3:
            # Hyperbolic plane patch has Ric_h = -(m-2) h; the product with
            # a flat time line leaves Ric_tt = 0 and Ric|_spatial = Ric_h.
            # With g|_spatial = -h the components are +(m-2) h_ab... sign:
            # Ric(g)_ab = Ric_h(a,b) for the product metric dt^2 - h, and
            # Ric_h = -(spatial_dim - 1) h for curvature -1.
            y = x[..., 1:]
            r2 = np.einsum("...i,...i->...", y, y)
            w2 = (2.0 / (1.0 - r2)) ** 2
            idx = np.arange(1, m)
            out[..., idx, idx] = (-(m - 2) * w2)[..., None]
        return out

    return CatalogEntry(name, fld, WeightField.zero(n),
                        line_point=_vertical_line(n),
                        line_velocity=_vertical_velocity(n),
                        classical_ricci=ric, params=dict(params))


def _weighted_product(window, params):
    """Flat product metric with weight V = (first spatial coordinate)^2."""
    n = window.dim
    N = float(params.get("N", n + 2))
    entry = _product(window, params, "flat")

    def V(x):
        return np.asarray(x, float)[..., 1] ** 2

    def dV(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape, float)
        out[..., 1] = 2.0 * x[..., 1]
        return out

    weight = WeightField(V, dV, N, n, name="square-weight")
    return CatalogEntry("weighted-product", entry.field, weight,
                        line_point=entry.line_point,
                        line_velocity=entry.line_velocity,
                        classical_ricci=entry.classical_ricci,
                        params=dict(params, N=N))


def _c1_perturbed(window, params):
    """Flat metric plus an |x - c|^(1+alpha) bump: C1 but not C2 at c."""
    n = window.dim
    alpha = float(params.get("alpha", 0.5))
    amp = float(params.get("amplitude", 0.1))
    center = np.asarray(params.get("center", np.zeros(n)), float)
    cut = float(params.get("cutoff", 0.8))

    def bump(x):
        x = np.asarray(x, float)
        d = x - center
        r = np.sqrt(np.einsum("...i,...i->...", d, d))
        q = 1.0 - (r / cut) ** 2
        chi = np.where(q > 0.0, q, 0.0) ** 2
        return amp * chi * r ** (1.0 + alpha)

    def dbump(x):
        x = np.asarray(x, float)
        d = x - center
        r = np.sqrt(np.einsum("...i,...i->...", d, d))
        safe = np.where(r > 0.0, r, 1.0)
        q = 1.0 - (r / cut) ** 2
        qp = np.where(q > 0.0, q, 0.0)
        chi = qp ** 2
        dchi = 2.0 * qp * (-2.0 / cut ** 2)  # times d via chain rule below
        # d/dx [chi * r^(1+a)] = dchi*x_i*r^(1+a) + chi*(1+a)r^(a-1)*x_i
        coef = dchi * r ** (1.0 + alpha) + chi * (1.0 + alpha) * r ** alpha / safe
        return amp * coef[..., None] * d

    def ev(x):
        x = np.asarray(x, float)
        m = x.shape[-1]
        g = np.zeros(x.shape[:-1] + (m, m), float)
        idx = np.arange(m)
        g[..., idx, idx] = -1.0
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = -(1.0 + bump(x))
        return g

    def dv(x):
        x = np.asarray(x, float)
        m = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (m, m, m), float)
        out[..., :, 1, 1] = -dbump(x)
        return out

    fld = MetricField(window, ev, dv, None, "C1", name="c1-perturbed")
    return CatalogEntry("c1-perturbed", fld, WeightField.zero(n),
                        line_point=_vertical_line(n),
                        line_velocity=_vertical_velocity(n),
                        classical_ricci=None,
                        params=dict(params, alpha=alpha, amplitude=amp))


_CATALOG = {
    "minkowski": _minkowski,
    "flrw-exp": lambda w, p: _flrw(w, p, "exp"),
    "flrw-cosh": lambda w, p: _flrw(w, p, "cosh"),
    "product-flat": lambda w, p: _product(w, p, "flat"),
    "product-hyperbolic": lambda w, p: _product(w, p, "hyperbolic"),
    "weighted-product": _weighted_product,
    "c1-perturbed": _c1_perturbed,
}


def catalog_names():
    return sorted(_CATALOG)


def catalog(name, window, **params):
    """Instantiate a catalog entry by name on the given window."""
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog metric {name!r}; "
                       f"known: {', '.join(catalog_names())}") from None
    return factory(window, params)


# ---------------------------------------------------------------------------
# Gridded custom metrics (CSV)
# ---------------------------------------------------------------------------

def _upper_indices(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def dump_metric_csv(field, window, path):
    """One record per grid node: coords, g upper triangle, d_k g upper triangle."""
    n = window.dim
    pts = window.grid_points().reshape(-1, n)
    g = field.eval(pts)
    dg = field.deriv(pts)
    pairs = _upper_indices(n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"x{i}" for i in range(n)]
        header += [f"g{i}{j}" for i, j in pairs]
        header += [f"d{k}g{i}{j}" for k in range(n) for i, j in pairs]
        w.writerow(header)
        for m in range(pts.shape[0]):
            row = list(pts[m])
            row += [g[m, i, j] for i, j in pairs]
            row += [dg[m, k, i, j] for k in range(n) for i, j in pairs]
            w.writerow([repr(float(v)) for v in row])


def _multilinear(axes, values, x):
    """Multilinear interpolation of gridded values at points x.

    values has shape grid_shape + tail; x has shape (..., n).
    """
    x = np.asarray(x, float)
    n = len(axes)
    batch = x.shape[:-1]
    idx = []
    frac = []
    for i, ax in enumerate(axes):
        h = ax[1] - ax[0]
        u = (x[..., i] - ax[0]) / h
        k = np.clip(np.floor(u).astype(int), 0, len(ax) - 2)
        idx.append(k)
        frac.append(u - k)
    tail = values.shape[n:]
    out = np.zeros(batch + tail, float)
    for corner in range(2 ** n):
        weight = np.ones(batch, float)
        sel = []
        for i in range(n):
            bit = (corner >> i) & 1
            sel.append(idx[i] + bit)
            weight = weight * (frac[i] if bit else (1.0 - frac[i]))
        out += weight.reshape(batch + (1,) * len(tail)) * values[tuple(sel)]
    return out


def load_metric_csv(path, dim, window=None, regularity_tag="C1"):
    """Load a gridded metric from CSV and serve it by multilinear interpolation.

    The records must cover a full tensor lattice.  The time orientation
    defaults to the first coordinate direction.
    """
    n = dim
    pairs = _upper_indices(n)
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        expected = n + len(pairs) + n * len(pairs)
        if len(header) != expected:
            raise ValueError(f"expected {expected} columns, got {len(header)}")
        for row in r:
            rows.append([float(v) for v in row])
    data = np.asarray(rows, float)
    coords = data[:, :n]
    axes = [np.unique(coords[:, i]) for i in range(n)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ValueError("records do not form a tensor lattice")
    order = np.lexsort(tuple(coords[:, i] for i in reversed(range(n))))
    data = data[order]

    gvals = np.zeros(shape + (n, n), float)
    dgvals = np.zeros(shape + (n, n, n), float)
    col = n
    for i, j in pairs:
        v = data[:, col].reshape(shape)
        gvals[..., i, j] = v
        gvals[..., j, i] = v
        col += 1
    for k in range(n):
        for i, j in pairs:
            v = data[:, col].reshape(shape)
            dgvals[..., k, i, j] = v
            dgvals[..., k, j, i] = v
            col += 1

    if window is None:
        bounds = np.array([[a[0], a[-1]] for a in axes])
        window = ChartWindow(n, bounds, shape)

    def ev(x):
        return _multilinear(axes, gvals, x)

    def dv(x):
        return _multilinear(axes, dgvals, x)

    return MetricField(window, ev, dv, None, regularity_tag, name="gridded-csv")
