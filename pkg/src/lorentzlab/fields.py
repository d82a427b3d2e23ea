"""Gridded scalar fields, finite differences, and tensor-grid quadrature.

Masked nodes are stored as NaN; stencils touching a masked node come out
NaN, so masks propagate automatically through derivative accessors.
"""

from __future__ import annotations

import csv

import numpy as np

from .chart import ChartWindow, _multilinear

__all__ = [
    "ScalarField",
    "fd_gradient",
    "fd_hessian",
    "trapezoid_nd",
    "quadrature_with_error",
    "gauss_legendre",
]


# ---------------------------------------------------------------------------
# Point stencils for evaluator-backed fields
# ---------------------------------------------------------------------------

def _shift(x, axis, amount):
    x = np.array(x, float, copy=True)
    x[..., axis] += amount
    return x


def fd_gradient(fn, x, h, order=2):
    """Central-difference gradient of a callable at points x (..., n).

    h may be a scalar or a per-point array broadcastable to x[..., 0].
    """
    x = np.asarray(x, float)
    n = x.shape[-1]
    h = np.broadcast_to(np.asarray(h, float), x.shape[:-1])
    out = np.empty(x.shape, float)
    for k in range(n):
        if order == 2:
            out[..., k] = (fn(_shift(x, k, h)) - fn(_shift(x, k, -h))) / (2 * h)
        elif order == 4:
            f1 = fn(_shift(x, k, h)) - fn(_shift(x, k, -h))
            f2 = fn(_shift(x, k, 2 * h)) - fn(_shift(x, k, -2 * h))
            out[..., k] = (8 * f1 - f2) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
    return out


def fd_hessian(fn, x, h, order=2):
    """Coordinate second partials d_i d_j of a callable, batched."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    h = np.broadcast_to(np.asarray(h, float), x.shape[:-1])
    f0 = fn(x)
    out = np.empty(x.shape[:-1] + (n, n), float)
    for i in range(n):
        if order == 2:
            out[..., i, i] = (fn(_shift(x, i, h)) - 2 * f0 + fn(_shift(x, i, -h))) / h ** 2
        else:
            a1 = fn(_shift(x, i, h)) + fn(_shift(x, i, -h))
            a2 = fn(_shift(x, i, 2 * h)) + fn(_shift(x, i, -2 * h))
            out[..., i, i] = (16 * a1 - a2 - 30 * f0) / (12 * h ** 2)
    for i in range(n):
        for j in range(i + 1, n):
            if order == 2:
                pp = fn(_shift(_shift(x, i, h), j, h))
                pm = fn(_shift(_shift(x, i, h), j, -h))
                mp = fn(_shift(_shift(x, i, -h), j, h))
                mm = fn(_shift(_shift(x, i, -h), j, -h))
                v = (pp - pm - mp + mm) / (4 * h ** 2)
            else:
                def g(a, b):
                    return fn(_shift(_shift(x, i, a * h), j, b * h))
                v = (-g(2, 2) + g(2, -2) + g(-2, 2) - g(-2, -2)
                     + 16 * (g(1, 1) - g(1, -1) - g(-1, 1) + g(-1, -1))) / (48 * h ** 2)
            out[..., i, j] = v
            out[..., j, i] = v
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def trapezoid_nd(values, spacing):
    """Tensor-grid trapezoid rule over all axes of `values`."""
    out = np.asarray(values, float)
    for ax in reversed(range(out.ndim)):
        out = np.trapezoid(out, dx=spacing[ax], axis=ax)
    return float(out)


def quadrature_with_error(values, spacing):
    """Trapezoid integral plus a Richardson error estimate.

    The estimate compares against the half-resolution grid (every second
    node), which requires an odd number of nodes along every axis.
    """
    values = np.asarray(values, float)
    if any((s - 1) % 2 != 0 for s in values.shape):
        raise ValueError("Richardson error estimate needs odd grid shapes")
    fine = trapezoid_nd(values, spacing)
    coarse = trapezoid_nd(values[(slice(None, None, 2),) * values.ndim],
                          [2 * s for s in spacing])
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    vol = float(np.prod([s * (m - 1) for s, m in zip(spacing, values.shape)]))
    floor = 1e-14 * (1.0 + scale * vol)
    return fine, max(abs(fine - coarse), floor)


def gauss_legendre(npts, a=0.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------

class ScalarField:
    """A scalar quantity on a chart window.

    Backed by grid values (NaN = masked) and optionally by a point
    evaluator, in which case derivative accessors can refine their own
    stencils instead of being tied to the grid spacing.
    """

    def __init__(self, window: ChartWindow, values, evaluator=None,
                 name="field", meta=None):
        values = np.asarray(values, float)
        if values.shape != window.grid_shape:
            raise ValueError(f"values shape {values.shape} does not match "
                             f"grid {window.grid_shape}")
        self.window = window
        self.values = values
        self.evaluator = evaluator
        self.name = name
        self.meta = dict(meta or {})
        self._axes = window.axes()

    @classmethod
    def from_evaluator(cls, window, fn, name="field", meta=None):
        pts = window.grid_points()
        vals = fn(pts.reshape(-1, window.dim)).reshape(window.grid_shape)
        return cls(window, vals, evaluator=fn, name=name, meta=meta)

    @property
    def mask(self):
        return np.isnan(self.values)

    @property
    def masked_fraction(self):
        return float(np.mean(self.mask))

    def value_at(self, x):
        if self.evaluator is not None:
            return self.evaluator(np.asarray(x, float))
        return _multilinear(self._axes, self.values, x)

    def gradient_grid(self):
        """Central-difference gradient at every node, shape grid + (n,)."""
        sp = self.window.spacing
        grads = np.gradient(self.values, *sp, edge_order=2)
        return np.stack(grads, axis=-1)

    def gradient_at(self, x, step=None, order=2):
        if self.evaluator is not None:
            h = np.min(self.window.spacing) if step is None else step
            return fd_gradient(self.evaluator, x, h, order=order)
        return _multilinear(self._axes, self.gradient_grid(), x)

    def hessian_grid(self):
        """Coordinate second differences at every node, grid + (n, n)."""
        sp = self.window.spacing
        n = self.window.dim
        v = self.values
        out = np.full(v.shape + (n, n), np.nan)
        grads = np.gradient(v, *sp, edge_order=2)
        for i in range(n):
            gi = np.gradient(grads[i], *sp, edge_order=2)
            for j in range(n):
                out[..., i, j] = gi[j]
        # symmetrize the mixed entries
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def hessian_at(self, x, step=None, order=2):
        if self.evaluator is not None:
            h = np.min(self.window.spacing) if step is None else step
            return fd_hessian(self.evaluator, x, h, order=order)
        return _multilinear(self._axes, self.hessian_grid(), x)

    def second_difference_magnitude(self):
        """Max |second difference| per node; the cut-locus suspect detector."""
        return np.max(np.abs(self.hessian_grid()), axis=(-2, -1))

    def coarsened(self):
        """The same field restricted to every second node."""
        if any((s - 1) % 2 != 0 for s in self.window.grid_shape):
            raise ValueError("coarsening needs odd grid shapes")
        shape = tuple((s - 1) // 2 + 1 for s in self.window.grid_shape)
        win = ChartWindow(self.window.dim, self.window.bounds, shape)
        sub = self.values[(slice(None, None, 2),) * self.window.dim]
        return ScalarField(win, sub, evaluator=self.evaluator,
                           name=self.name + "-coarse", meta=self.meta)

    def dump_csv(self, path, extra_columns=None):
        """Write (coords, value, mask) rows, plus optional extra fields."""
        n = self.window.dim
        pts = self.window.grid_points().reshape(-1, n)
        vals = self.values.reshape(-1)
        extras = {k: np.asarray(v).reshape(-1) for k, v in (extra_columns or {}).items()}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(n)] + ["value", "mask"]
                       + list(extras))
            for m in range(pts.shape[0]):
                row = [repr(float(c)) for c in pts[m]]
                row.append(repr(float(vals[m])) if np.isfinite(vals[m]) else "nan")
                row.append(int(not np.isfinite(vals[m])))
                for k in extras:
                    e = extras[k][m]
                    row.append(repr(float(e)) if np.isfinite(e) else "nan")
                w.writerow(row)
