"""Christoffel symbols and distributional curvature pairings.

The Ricci and Hessian pairings move exactly one derivative off the
curvature expression onto the compactly supported test data, so only the
metric components and their first derivatives are ever evaluated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chart import MetricField, TestData, WeightField
from .errors import ConventionViolation, SupportLeak
from .fields import quadrature_with_error

__all__ = [
    "ChristoffelValue",
    "DistributionPairing",
    "christoffel",
    "christoffel_batch",
    "ricci_pair",
    "hessian_pair",
    "bakry_emery_pair",
    "energy_condition_probe",
]


@dataclass(frozen=True)
class ChristoffelValue:
    x: np.ndarray
    gamma: np.ndarray  # gamma[i, j, k] = Gamma^i_jk, symmetric in (j, k)


@dataclass(frozen=True)
class DistributionPairing:
    value: float
    quadrature_error: float
    integrand_samples: Optional[np.ndarray] = None

    def within(self, factor=1.0):
        return abs(self.value) <= factor * self.quadrature_error


def christoffel_batch(g, dg):
    """Gamma^i_jk = g^im (d_j g_mk + d_k g_jm - d_m g_jk) / 2, batched.

    dg[..., k, i, j] = d_k g_ij.
    """
    ginv = np.linalg.inv(g)
    K = (np.einsum("...jmk->...mjk", dg)
         + np.einsum("...kjm->...mjk", dg)
         - dg)
    return 0.5 * np.einsum("...im,...mjk->...ijk", ginv, K)


def christoffel(field: MetricField, x) -> ChristoffelValue:
    x = np.asarray(x, float)
    g, dg = field.eval(x, check=True), field.deriv(x, check=False)
    return ChristoffelValue(x=x, gamma=christoffel_batch(g, dg))


# ---------------------------------------------------------------------------
# Pairings
# ---------------------------------------------------------------------------

def _check_support(window, mu_vals):
    """Reject densities that reach within one grid cell of the boundary."""
    m = np.asarray(mu_vals)
    for ax in range(m.ndim):
        edge = np.take(m, [0, 1, -2, -1], axis=ax)
        if np.any(np.abs(edge) > 0.0):
            raise SupportLeak("test density reaches within one grid cell of "
                              "the window boundary")


def _grid_geometry(field):
    window = field.window
    pts = window.grid_points()
    flat = pts.reshape(-1, window.dim)
    g = field.eval(flat, check=False)
    dg = field.deriv(flat, check=False)
    gamma = christoffel_batch(g, dg)
    sqrtg = np.sqrt(np.abs(np.linalg.det(g)))
    return window, pts, flat, g, dg, gamma, sqrtg


def _psi_and_derivative(X: TestData, mu: TestData, flat, gamma, sqrtg):
    """psi^ij = X^i X^j mu sqrt|g| and its coordinate divergence inputs."""
    Xv = X.vector_field(flat)
    dXv = X.vector_deriv(flat)
    muv = mu.density(flat)
    dmuv = mu.density_deriv(flat)
    psi_core = np.einsum("...i,...j,...->...ij", Xv, Xv, muv)
    # d_m (X^i X^j mu): product rule on the coordinate data
    dcore = (np.einsum("...mi,...j,...->...mij", dXv, Xv, muv)
             + np.einsum("...i,...mj,...->...mij", Xv, dXv, muv)
             + np.einsum("...i,...j,...m->...mij", Xv, Xv, dmuv))
    # d_m sqrt|g| = sqrt|g| Gamma^k_km
    dlog_sqrtg = np.einsum("...kkm->...m", gamma)
    psi = psi_core * sqrtg[..., None, None]
    dpsi = (dcore * sqrtg[..., None, None, None]
            + np.einsum("...m,...ij->...mij", dlog_sqrtg, psi))
    return Xv, muv, psi, dpsi


def _ricci_integrand(field, X, mu):
    window, pts, flat, g, dg, gamma, sqrtg = _grid_geometry(field)
    Xv, muv, psi, dpsi = _psi_and_derivative(X, mu, flat, gamma, sqrtg)
    _check_support(window, muv.reshape(window.grid_shape))
    # <Ric(X,X), mu vol> with the two dGamma terms integrated by parts:
    #   int d_m Gamma^m_ij psi^ij  -> - int Gamma^m_ij d_m psi^ij
    #   int -d_j Gamma^m_im psi^ij -> + int Gamma^m_im d_j psi^ij
    t1 = -np.einsum("...mij,...mij->...", gamma, dpsi)
    t2 = np.einsum("...mim,...jij->...", gamma, dpsi)
    quad = (np.einsum("...mij,...kkm->...ij", gamma, gamma)
            - np.einsum("...mik,...kjm->...ij", gamma, gamma))
    t3 = np.einsum("...ij,...ij->...", quad, psi)
    return (t1 + t2 + t3).reshape(window.grid_shape)


def _hessian_integrand(field, V: WeightField, X, mu):
    window, pts, flat, g, dg, gamma, sqrtg = _grid_geometry(field)
    Xv, muv, psi, dpsi = _psi_and_derivative(X, mu, flat, gamma, sqrtg)
    _check_support(window, muv.reshape(window.grid_shape))
    dV = V.deriv(flat)
    # int d_i d_j V psi^ij -> - int d_i V d_j psi^ij
    t1 = -np.einsum("...i,...jij->...", dV, dpsi)
    t2 = -np.einsum("...kij,...k,...ij->...", gamma, dV, psi)
    return (t1 + t2).reshape(window.grid_shape)


def _dv_squared_integrand(field, V: WeightField, X, mu):
    window = field.window
    flat = window.grid_points().reshape(-1, window.dim)
    g = field.eval(flat, check=False)
    sqrtg = np.sqrt(np.abs(np.linalg.det(g)))
    Xv = X.vector_field(flat)
    muv = mu.density(flat)
    dV = V.deriv(flat)
    dVX = np.einsum("...i,...i->...", dV, Xv)
    return (dVX ** 2 * muv * sqrtg).reshape(window.grid_shape)


def ricci_pair(field, X: TestData, mu: TestData, keep_samples=False):
    """Distributional Ricci curvature contracted with X (x) X against mu."""
    integrand = _ricci_integrand(field, X, mu)
    value, err = quadrature_with_error(integrand, field.window.spacing)
    return DistributionPairing(value, err,
                               integrand if keep_samples else None)


def hessian_pair(field, V: WeightField, X: TestData, mu: TestData,
                 keep_samples=False):
    """Distributional Hessian of the weight, contracted and integrated."""
    integrand = _hessian_integrand(field, V, X, mu)
    value, err = quadrature_with_error(integrand, field.window.spacing)
    return DistributionPairing(value, err,
                               integrand if keep_samples else None)


def bakry_emery_pair(field, V: WeightField, X: TestData, mu: TestData,
                     N=None, keep_samples=False):
    """Pairing of Ric + Hess V - dV (x) dV / (N - n) with (X (x) X, mu).

    The correction term is dropped when N equals the dimension, in which
    case the weight must vanish identically.
    """
    n = field.dim
    N = V.synthetic_dim if N is None else float(N)
    if N < n:
        raise ValueError("synthetic dimension must be >= dim")
    integrand = _ricci_integrand(field, X, mu)
    if N == n:
        if not V.is_zero_on(field.window):
            raise ConventionViolation("N = dim requires V identically zero")
    else:
        integrand = integrand + _hessian_integrand(field, V, X, mu)
        integrand = integrand - _dv_squared_integrand(field, V, X, mu) / (N - n)
    value, err = quadrature_with_error(integrand, field.window.spacing)
    return DistributionPairing(value, err,
                               integrand if keep_samples else None)


# ---------------------------------------------------------------------------
# Energy-condition probing
# ---------------------------------------------------------------------------

DEFAULT_RAPIDITIES = (0.0, 0.5, 1.0, 1.5)


def _orthonormal_frame(field, x):
    """Unit timelike leg from the orientation field plus a spatial
    g-orthonormal completion of the coordinate frame at x."""
    g = field.eval(x)
    F = field.orientation(x)
    T = F / np.sqrt(F @ g @ F)
    legs = [T]
    for k in range(field.dim):
        e = np.zeros(field.dim)
        e[k] = 1.0
        for b in legs:
            gb = g @ b
            e = e - (e @ gb) / (b @ gb) * b
        q = e @ g @ e
        if abs(q) < 1e-12:
            continue
        legs.append(e / np.sqrt(abs(q)))
        if len(legs) == field.dim:
            break
    return legs[0], legs[1:]


def energy_condition_probe(field, V: WeightField, N, region, K,
                           rapidities=DEFAULT_RAPIDITIES,
                           bump_centers_per_axis=3, bump_radius=None,
                           tol=None, mode="timelike"):
    """Probe the energy condition Ric^(g,N,V) >= K g over a region.

    A deterministic family of unit test directions (boosts of the
    orientation field in every spatial plane, or the full orthonormal fan
    in riemannian mode) is contracted against bumps placed on a lattice in
    the region.  Each deficit is normalized per unit weighted bump mass
    and per unit squared boost magnitude max(1, sinh^2 rapidity), which
    makes magnitudes comparable across the sweep.

    Returns a report dict; report["holds"] certifies nonnegativity of the
    minimum normalized deficit within tolerance.
    """
    window = field.window
    region = np.asarray(region, float)
    if region.shape != (field.dim, 2):
        raise ValueError("region must be (dim, 2) bounds")
    widths = region[:, 1] - region[:, 0]
    if bump_radius is None:
        # bumps need several grid cells of support for a usable quadrature
        h_max = float(np.max(window.spacing))
        bump_radius = min(0.45 * float(np.min(widths)),
                          max(6.0 * h_max,
                              0.45 * float(np.min(widths)) / bump_centers_per_axis))
    centers_axes = [np.linspace(region[i, 0] + bump_radius,
                                region[i, 1] - bump_radius,
                                bump_centers_per_axis)
                    for i in range(field.dim)]
    centers = np.stack(np.meshgrid(*centers_axes, indexing="ij"), axis=-1)
    centers = np.unique(np.round(centers.reshape(-1, field.dim), 12), axis=0)

    samples = []
    best = None
    for c in centers:
        mu = TestData.bump(c, bump_radius)
        mass_w, _ = quadrature_with_error(
            mu.density(window.grid_points())
            * np.sqrt(np.abs(np.linalg.det(
                field.eval(window.grid_points().reshape(-1, field.dim),
                           check=False)))).reshape(window.grid_shape),
            window.spacing)
        T, spatial = _orthonormal_frame(field, c)
        if mode == "timelike":
            directions = []
            for e in spatial:
                for a in rapidities:
                    if a == 0.0 and directions:
                        continue  # the pure orientation leg only once
                    directions.append((np.cosh(a) * T + np.sinh(a) * e, a))
                    if a != 0.0:
                        directions.append((np.cosh(a) * T - np.sinh(a) * e, a))
        else:
            legs = [T] + spatial
            directions = [(e, 0.0) for e in legs]
            for i in range(len(legs)):
                for j in range(i + 1, len(legs)):
                    d = (legs[i] + legs[j]) / np.sqrt(2.0)
                    directions.append((d, 0.0))
        for vec, a in directions:
            X = TestData.constant_vector(vec)
            pairing = bakry_emery_pair(field, V, X, mu, N=N)
            gXX = field.norm2(np.broadcast_to(c, (1, field.dim)),
                              np.broadcast_to(vec, (1, field.dim)))[0]
            deficit = pairing.value - K * gXX * mass_w
            norm = mass_w * max(1.0, np.sinh(a) ** 2)
            nu = deficit / norm
            nu_tol = 5.0 * pairing.quadrature_error / norm
            rec = {"center": c.tolist(), "radius": bump_radius,
                   "rapidity": float(a), "direction": vec.tolist(),
                   "pairing": pairing.value, "normalized": float(nu),
                   "tol": float(nu_tol)}
            samples.append(rec)
            if best is None or nu < best["normalized"]:
                best = rec

    if tol is None:
        violated = [r for r in samples if r["normalized"] < -r["tol"]]
        holds = not violated
        tolerance = best["tol"]
    else:
        holds = best["normalized"] >= -tol
        tolerance = tol
    report = {
        "region": region.tolist(),
        "K": float(K),
        "N": float(N),
        "min_pairing": best["normalized"],
        "argmin": best,
        "holds": bool(holds),
        "tolerance": float(tolerance),
        "samples": samples,
        "mode": mode,
    }
    return report


def probe_report_json(report, path):
    slim = {k: report[k] for k in
            ("region", "K", "N", "min_pairing", "argmin", "holds", "tolerance")}
    with open(path, "w") as fh:
        json.dump(slim, fh, indent=2, sort_keys=True)
