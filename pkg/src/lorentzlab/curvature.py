"""Classical curvature from explicit second-derivative data.

These routines are for smooth metrics whose second derivatives are
available analytically or by differentiating a convolution; they are kept
out of the MetricField interface on purpose, so the C1 core of the
package can never request them by accident.

Conventions: dg[..., k, i, j] = d_k g_ij and
d2g[..., l, k, i, j] = d_l d_k g_ij.
"""

from __future__ import annotations

import numpy as np

from .connection import christoffel_batch

__all__ = [
    "christoffel_derivative",
    "classical_ricci",
    "classical_hessian",
    "classical_bakry_emery",
]


def christoffel_derivative(g, dg, d2g):
    """d_l Gamma^i_jk from metric data with second derivatives."""
    ginv = np.linalg.inv(g)
    K = (np.einsum("...jmk->...mjk", dg)
         + np.einsum("...kjm->...mjk", dg)
         - dg)
    # d_l K_mjk from the second derivatives
    dK = (np.einsum("...ljmk->...lmjk", d2g)
          + np.einsum("...lkjm->...lmjk", d2g)
          - d2g)
    # d_l g^im = -g^ia (d_l g_ab) g^bm
    dginv = -np.einsum("...ia,...lab,...bm->...lim", ginv, dg, ginv)
    return 0.5 * (np.einsum("...lim,...mjk->...lijk", dginv, K)
                  + np.einsum("...im,...lmjk->...lijk", ginv, dK))


def classical_ricci(g, dg, d2g):
    """Ric_ij evaluated pointwise from the coordinate formula."""
    gamma = christoffel_batch(g, dg)
    dgamma = christoffel_derivative(g, dg, d2g)
    t1 = np.einsum("...mmij->...ij", dgamma)
    t2 = np.einsum("...jmim->...ij", dgamma)
    t3 = np.einsum("...mij,...kkm->...ij", gamma, gamma)
    t4 = np.einsum("...mik,...kjm->...ij", gamma, gamma)
    return t1 - t2 + t3 - t4


def classical_hessian(g, dg, dV, d2V):
    """(Hess V)_ij = d_i d_j V - Gamma^k_ij d_k V."""
    gamma = christoffel_batch(g, dg)
    return d2V - np.einsum("...kij,...k->...ij", gamma, dV)


def classical_bakry_emery(g, dg, d2g, dV, d2V, N, n):
    """Ric + Hess V - dV (x) dV / (N - n), with the N = n convention."""
    ric = classical_ricci(g, dg, d2g)
    if N == n:
        return ric
    hess = classical_hessian(g, dg, dV, d2V)
    corr = np.einsum("...i,...j->...ij", dV, dV) / (N - n)
    return ric + hess - corr
