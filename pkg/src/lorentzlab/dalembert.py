"""Comparison functions and the weighted p-d'Alembert machinery.

The operator box_p u = -div(grad u / |du|^(2-p)) + g*(dV, du/|du|^(2-p))
is evaluated through the divergence formula expanded by the product rule,
so only first derivatives of the metric and first plus second differences
of u appear.  It is elliptic on functions with timelike gradient for
p < 1, which is what every comparison below leans on.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .chart import MetricField, TestData, WeightField, _character_batch
from .connection import christoffel_batch, _check_support
from .errors import DegenerateGradient, WrongCausalType
from .fields import (ScalarField, fd_gradient, fd_hessian, gauss_legendre,
                     trapezoid_nd)

__all__ = [
    "ComparisonFns",
    "WeakFormResult",
    "TangencyCoefficients",
    "comparison_fns",
    "p_dalembert",
    "strong_comparison_check",
    "weak_comparison",
    "tangency_coefficients",
    "bochner_ohta_residual",
]

DEGENERATE_GRADIENT_FLOOR = 0.1  # |du|_g below this leaves the elliptic domain


# ---------------------------------------------------------------------------
# Comparison functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonFns:
    """Solutions of s'' + kappa s = 0 with s(0)=0, s'(0)=1, and friends."""

    kappa: float

    def sin(self, t):
        t = np.asarray(t, float)
        k = self.kappa
        if k > 0:
            r = np.sqrt(k)
            return np.sin(r * t) / r
        if k < 0:
            r = np.sqrt(-k)
            return np.sinh(r * t) / r
        return t

    def sin_prime(self, t):
        t = np.asarray(t, float)
        k = self.kappa
        if k > 0:
            return np.cos(np.sqrt(k) * t)
        if k < 0:
            return np.cosh(np.sqrt(-k) * t)
        return np.ones_like(t)

    def cot(self, t):
        return self.sin_prime(t) / self.sin(t)

    @property
    def first_root(self):
        return np.pi / np.sqrt(self.kappa) if self.kappa > 0 else np.inf


def comparison_fns(kappa) -> ComparisonFns:
    return ComparisonFns(float(kappa))


# ---------------------------------------------------------------------------
# The p-d'Alembert operator
# ---------------------------------------------------------------------------

def _field_derivative_data(u, x, step, order):
    if u.evaluator is not None:
        du = fd_gradient(u.evaluator, x, step, order=order)
        d2u = fd_hessian(u.evaluator, x, step, order=order)
    else:
        du = u.gradient_at(x)
        d2u = u.hessian_at(x)
    return du, d2u


def p_dalembert(field: MetricField, V: Optional[WeightField], u: ScalarField,
                p, x, step=None, order=None, expect=None, aux=None):
    """box_p^(g,V) u at points x, batched over the leading axis of x.

    step/order control the finite-difference stencil on u when u carries
    an evaluator; grid-backed fields use their own grid differences.
    expect, when given, is the required causal character of grad u.
    """
    if p == 0 or p >= 1:
        raise ValueError("p must be nonzero and < 1")
    x = np.asarray(x, float)
    single = x.ndim == 1
    xb = x[None] if single else x
    if step is None:
        step = float(np.min(u.window.spacing))
    if order is None:
        order = 4 if u.evaluator is not None else 2

    g = field.eval(xb, check=False)
    dg = field.deriv(xb, check=False)
    ginv = np.linalg.inv(g)
    gamma = christoffel_batch(g, dg)
    du, d2u = _field_derivative_data(u, xb, step, order)

    grad = np.einsum("...ij,...j->...i", ginv, du)          # grad u (vector)
    q = np.einsum("...i,...i->...", du, grad)               # |du|_g^2
    if np.any(~np.isfinite(q)) or np.any(q < DEGENERATE_GRADIENT_FLOOR ** 2):
        raise DegenerateGradient(
            f"|du|_g fell below {DEGENERATE_GRADIENT_FLOOR} on the batch")
    if expect is not None:
        chars = _character_batch(field, xb, grad, aux=aux)
        if not np.all(chars == expect):
            raise WrongCausalType(
                f"grad u is not {expect} everywhere on the batch")

    # d_i g^{ij} = -g^{ia} d_i g_{ab} g^{bj} contracted over i
    dginv_contr = -np.einsum("...ia,...iab,...bj->...j", ginv, dg, ginv)
    # d_k |du|^2 = (d_k g^{ab}) d_a u d_b u + 2 g^{ab} d2u_{ka} d_b u
    dginv_full = -np.einsum("...ic,...kcd,...dj->...kij", ginv, dg, ginv)
    dq = (np.einsum("...kab,...a,...b->...k", dginv_full, du, du)
          + 2.0 * np.einsum("...ab,...ka,...b->...k", ginv, d2u, du))

    lap = (np.einsum("...ij,...ij->...", ginv, d2u)
           + np.einsum("...j,...j->...", dginv_contr, du)
           + np.einsum("...i,...kki->...", grad, gamma))
    s = q ** ((p - 2) / 2.0)
    div_X = s * lap + (p - 2) / 2.0 * q ** ((p - 4) / 2.0) * \
        np.einsum("...i,...i->...", grad, dq)
    out = -div_X
    if V is not None:
        dV = V.deriv(xb)
        out = out + s * np.einsum("...ij,...i,...j->...", ginv, dV, du)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Strong comparison outside the cut locus
# ---------------------------------------------------------------------------

def strong_comparison_check(field, V, N, K, o, region, p=-1.0,
                            grid_per_axis=17, ell_min=0.2,
                            cut_mask=True, cut_threshold_factor=50.0,
                            step_factor=0.03, aux=None):
    """Max positive violation of box_p(-l(., o)) <= (N-1) cot_{K/(N-1)}(l).

    Nodes with l below ell_min are skipped; cut-locus suspects (second
    differences beyond cut_threshold_factor / h) are masked when cut_mask
    is on.  Violations are reported relative to 1 + |cot| and the
    saturation gap is tracked alongside.
    """
    from .timesep import separation_evaluator

    region = np.asarray(region, float)
    n = field.dim
    axes = [np.linspace(region[i, 0], region[i, 1], grid_per_axis)
            for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)

    ell_fn = separation_evaluator(field, o, "to-o")
    ell = ell_fn(pts)
    usable = np.isfinite(ell) & (ell >= ell_min)
    pts_u = pts[usable]
    ell_u = ell[usable]

    def u_eval(z):
        return -ell_fn(z)

    u_sf = ScalarField(field.window,
                       np.full(field.window.grid_shape, np.nan),
                       evaluator=u_eval, name="neg-separation")

    dt_char = np.abs(np.asarray(o, float)[0] - pts_u[:, 0]) + ell_u
    steps = step_factor * ell_u ** 2 / dt_char
    box = p_dalembert(field, V, u_sf, p, pts_u, step=steps, order=4, aux=aux)

    masked = np.zeros(len(pts_u), bool)
    if cut_mask:
        h = float(np.min(np.diff(axes[0])))
        d2 = fd_hessian(u_eval, pts_u, steps, order=2)
        masked = np.max(np.abs(d2), axis=(-2, -1)) > cut_threshold_factor / h

    fns = comparison_fns(K / (N - 1.0))
    bound = (N - 1.0) * fns.cot(ell_u)
    scale = 1.0 + np.abs(bound)
    viol = (box - bound) / scale
    gap = np.abs(box - bound) / scale
    keep = ~masked
    return {
        "max_violation_rel": float(np.max(np.clip(viol[keep], 0.0, None),
                                          initial=0.0)),
        "max_gap_rel": float(np.max(gap[keep], initial=0.0)),
        "n_nodes": int(keep.sum()),
        "n_masked": int(masked.sum()),
        "n_skipped": int((~usable).sum()),
        "p": float(p), "K": float(K), "N": float(N),
    }


# ---------------------------------------------------------------------------
# Weak comparison
# ---------------------------------------------------------------------------

@dataclass
class WeakFormResult:
    value: float
    quadrature_error: float
    meta: dict = dc_field(default_factory=dict)


def _weak_integrand(field, V, N, p, f_vals, window, phi, point_source):
    """Integrand array of the weak comparison form on the given grid."""
    n = window.dim
    pts = window.grid_points()
    flat = pts.reshape(-1, n)
    g = field.eval(flat, check=False)
    ginv = np.linalg.inv(g)
    sqrtg = np.sqrt(np.abs(np.linalg.det(g)))
    Vv = V.eval(flat)
    dV = V.deriv(flat)
    m = phi.density(flat)
    dm = phi.density_deriv(flat)

    f_sf = ScalarField(window, f_vals)
    df = f_sf.gradient_grid().reshape(-1, n)
    q = np.einsum("...ij,...i,...j->...", ginv, df, df)

    supp = m > 0.0
    degenerate = supp & (~np.isfinite(q) | (q < DEGENERATE_GRADIENT_FLOOR ** 2))
    if degenerate.sum() > 0.01 * max(supp.sum(), 1):
        raise DegenerateGradient(
            "df degenerates on more than 1% of the test support")

    s = np.where(supp & np.isfinite(q) & (q > 0), q, 1.0) ** ((p - 2) / 2.0)
    pair = np.einsum("...ij,...i,...j->...", ginv, dm + m[..., None] * dV, df)
    integrand = pair * s
    if point_source:
        integrand = integrand + (N - 1.0) * m / f_vals.reshape(-1)
    integrand = np.where(supp, integrand, 0.0)
    return (integrand * np.exp(-Vv) * sqrtg).reshape(window.grid_shape)


def weak_comparison(field, V, N, p, source, phi: TestData,
                    f: Optional[ScalarField] = None,
                    schedule=None, aux=None) -> WeakFormResult:
    """Quadrature of the weak comparison form; the caller asserts <= error.

    source is {"point": o} (the (N-1) phi / f term is included, with
    f = -l(., o)) or {"ray": TimelikeRay} (the term is dropped and f is a
    forward Busemann field).  A precomputed f overrides the source field.
    """
    from .busemann import DEFAULT_SCHEDULE, busemann_limit_batch
    from .timesep import separation_evaluator

    window = field.window
    point_source = "point" in source
    if f is None:
        if point_source:
            ev = separation_evaluator(field, np.asarray(source["point"], float),
                                      "to-o", aux=aux)
            f_vals = -ev(window.grid_points().reshape(-1, window.dim))
        else:
            ray = source["ray"]
            pts = window.grid_points().reshape(-1, window.dim)
            vals, _ = busemann_limit_batch(field, ray, pts, "+",
                                           schedule or DEFAULT_SCHEDULE,
                                           extrapolate=True, aux=aux)
            f_vals = vals
        f_vals = f_vals.reshape(window.grid_shape)
    else:
        f_vals = f.values

    _check_support(window, phi.density(window.grid_points()))

    fine = _weak_integrand(field, V, N, p, f_vals, window, phi, point_source)
    value = trapezoid_nd(fine, window.spacing)

    coarse_win = ScalarField(window, f_vals).coarsened()
    coarse = _weak_integrand(field, V, N, p, coarse_win.values,
                             coarse_win.window, phi, point_source)
    value_c = trapezoid_nd(coarse, coarse_win.window.spacing)
    scale = float(np.max(np.abs(fine))) if fine.size else 0.0
    vol = float(np.prod(window.bounds[:, 1] - window.bounds[:, 0]))
    err = max(abs(value - value_c), 1e-14 * (1.0 + scale * vol))
    return WeakFormResult(float(value), float(err),
                          meta={"point_source": point_source, "p": float(p),
                                "N": float(N)})


# ---------------------------------------------------------------------------
# Tangency-operator coefficients
# ---------------------------------------------------------------------------

@dataclass
class TangencyCoefficients:
    x: np.ndarray
    a: np.ndarray           # a^{ij}, symmetric
    c: np.ndarray           # c^j = a^{ij} d_i V
    eig_min: float
    eig_max: float
    p: float


def tangency_coefficients(field, V, bplus: ScalarField, bminus: ScalarField,
                          p, x, quad_points=16, step=None,
                          aux=None) -> TangencyCoefficients:
    """Coefficients of the linear operator whose supersolution is b+ - b-.

    a^{ij}(x) = e^{-V} sqrt|g| int_0^1 |db(t)|^{p-2}
                 ((2-p) grad b(t)^i grad b(t)^j / |db(t)|^2 - g^{ij}) dt
    with db(t) the segment from db- to db+, by Gauss quadrature in t.
    """
    if p == 0 or p >= 1:
        raise ValueError("p must be nonzero and < 1")
    x = np.asarray(x, float)
    g = field.eval(x)
    ginv = np.linalg.inv(g)
    sqrtg = float(np.sqrt(abs(np.linalg.det(g))))
    Vv = float(V.eval(x))
    dV = V.deriv(x)

    dbp = bplus.gradient_at(x, step=step)
    dbm = bminus.gradient_at(x, step=step)
    for db in (dbp, dbm):
        qd = float(db @ ginv @ db)
        if not np.isfinite(qd) or qd < DEGENERATE_GRADIENT_FLOOR ** 2:
            raise DegenerateGradient("db is not safely timelike at x")

    nodes, weights = gauss_legendre(quad_points, 0.0, 1.0)
    n = field.dim
    a = np.zeros((n, n))
    for t, w in zip(nodes, weights):
        db = dbm + t * (dbp - dbm)
        grad = ginv @ db
        q = float(db @ grad)
        bracket = (2.0 - p) * np.outer(grad, grad) / q - ginv
        a = a + w * q ** ((p - 2) / 2.0) * bracket
    a = np.exp(-Vv) * sqrtg * 0.5 * (a + a.T)
    c = a @ dV
    eig = np.linalg.eigvalsh(a)
    return TangencyCoefficients(x, a, c, float(eig[0]), float(eig[-1]),
                                float(p))


# ---------------------------------------------------------------------------
# Bochner-Ohta residual
# ---------------------------------------------------------------------------

def _d2h_upper(ginv, grad, q, p):
    """Hessian in the cotangent slot of H(v) = -|v|^p / p at v = du."""
    s = q ** ((p - 2) / 2.0)
    return s[..., None, None] * (
        (2.0 - p) * np.einsum("...i,...j->...ij", grad, grad) / q[..., None, None]
        - ginv)


def bochner_ohta_residual(field, V, p, u: ScalarField, phi: TestData,
                          ricci=None, weight_hessian=None, aux=None):
    """|LHS - RHS| of the integrated weighted Bochner-Ohta identity.

    The Hessian trace term uses second differences of u; the curvature
    term uses the supplied classical ricci callable (zeros when None, the
    flat-space case).  Returns (residual, lhs, rhs, quadrature_error).
    """
    window = u.window
    n = window.dim
    pts = window.grid_points()
    flat = pts.reshape(-1, n)

    g = field.eval(flat, check=False)
    dg = field.deriv(flat, check=False)
    ginv = np.linalg.inv(g)
    gamma = christoffel_batch(g, dg)
    sqrtg = np.sqrt(np.abs(np.linalg.det(g)))
    Vv = V.eval(flat)
    dV = V.deriv(flat)
    weight = np.exp(-Vv) * sqrtg

    du = u.gradient_grid().reshape(-1, n)
    d2u = u.hessian_grid().reshape(-1, n, n)
    hess_u = d2u - np.einsum("...kij,...k->...ij", gamma, du)
    grad = np.einsum("...ij,...j->...i", ginv, du)
    q = np.einsum("...i,...i->...", du, grad)
    if np.any(q < DEGENERATE_GRADIENT_FLOOR ** 2):
        raise DegenerateGradient("|du| not bounded below on the window")

    m = phi.density(flat)
    dm = phi.density_deriv(flat)
    _check_support(window, m.reshape(window.grid_shape))

    d2h = _d2h_upper(ginv, grad, q, p)
    M = np.einsum("...ik,...kj->...ij", d2h, hess_u)
    trace_term = np.einsum("...ij,...ji->...", M, M)

    ric = ricci(flat) if ricci is not None else np.zeros_like(g)
    if weight_hessian is not None:
        hV = weight_hessian(flat)
    else:
        h_fd = 1e-5
        hV = np.empty((flat.shape[0], n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = h_fd
            hV[:, k, :] = (V.deriv(flat + e) - V.deriv(flat - e)) / (2 * h_fd)
        hV = 0.5 * (hV + np.swapaxes(hV, 1, 2)) \
            - np.einsum("...kij,...k->...ij", gamma, dV)
    ric_term = np.einsum("...ij,...i,...j->...", ric + hV, grad, grad) \
        / q ** (2.0 - p)
    lhs = ((trace_term + ric_term) * m * weight).reshape(window.grid_shape)
    lhs_val = trapezoid_nd(lhs, window.spacing)

    # RHS pieces
    box = p_dalembert(field, V, u, p, flat)
    s = q ** ((p - 2) / 2.0)
    DH = -s[..., None] * grad
    Y = m[..., None] * DH
    Ysqrt = (Y * sqrtg[..., None]).reshape(window.grid_shape + (n,))
    divY = np.zeros(window.grid_shape)
    sp = window.spacing
    for i in range(n):
        divY += np.gradient(Ysqrt[..., i], sp[i], axis=i, edge_order=2)
    divY = divY / sqrtg.reshape(window.grid_shape)
    div_wY = divY - (np.einsum("...i,...i->...", Y, dV)
                     ).reshape(window.grid_shape)

    Hfield = (-q ** (p / 2.0) / p).reshape(window.grid_shape)
    dH = np.stack(np.gradient(Hfield, *sp, edge_order=2), axis=-1)
    dH = dH.reshape(-1, n)
    cross = np.einsum("...ij,...i,...j->...", d2h, dm, dH)

    rhs = ((box.reshape(window.grid_shape) * div_wY)
           - cross.reshape(window.grid_shape)) \
        * weight.reshape(window.grid_shape)
    rhs_val = trapezoid_nd(rhs, window.spacing)

    # Richardson on the combined defect via the coarse grid
    sub = (slice(None, None, 2),) * n
    lhs_c = trapezoid_nd(lhs[sub], 2 * sp)
    rhs_c = trapezoid_nd(rhs[sub], 2 * sp)
    err = abs((lhs_val - rhs_val) - (lhs_c - rhs_c)) + 1e-14
    return {
        "residual": float(abs(lhs_val - rhs_val)),
        "lhs": float(lhs_val),
        "rhs": float(rhs_val),
        "quadrature_error": float(err),
    }
