"""Independent symbolic oracles for the test suite.

Everything here is derived with sympy from the closed-form metric
expressions, independently of the package's finite-difference and
integration-by-parts code paths.
"""

import numpy as np
import sympy as sp


def _coords(n):
    return sp.symbols(f"x0:{n}", real=True)


def symbolic_metric(name, n=2):
    """Metric matrix and coordinates for a catalog entry."""
    xs = _coords(n)
    t = xs[0]
    if name == "minkowski":
        gm = sp.diag(1, *([-1] * (n - 1)))
    elif name == "flrw-exp":
        a2 = sp.exp(2 * t)
        gm = sp.diag(1, *([-a2] * (n - 1)))
    elif name == "flrw-cosh":
        a2 = sp.cosh(t) ** 2
        gm = sp.diag(1, *([-a2] * (n - 1)))
    elif name == "product-hyperbolic":
        r2 = sum(x ** 2 for x in xs[1:])
        w2 = (2 / (1 - r2)) ** 2
        gm = sp.diag(1, *([-w2] * (n - 1)))
    elif name in ("product-flat", "weighted-product"):
        gm = sp.diag(1, *([-1] * (n - 1)))
    else:
        raise KeyError(name)
    return gm, xs


def christoffel_sym(gm, xs):
    n = len(xs)
    ginv = gm.inv()
    Gamma = [[[sp.simplify(sum(
        ginv[i, m] * (sp.diff(gm[m, k], xs[j]) + sp.diff(gm[j, m], xs[k])
                      - sp.diff(gm[j, k], xs[m])) for m in range(n)) / 2)
        for k in range(n)] for j in range(n)] for i in range(n)]
    return Gamma


def ricci_sym(gm, xs):
    """Ric_ij = d_m Gamma^m_ij - d_j Gamma^m_im + Gamma^m_ij Gamma^k_km
    - Gamma^m_ik Gamma^k_jm."""
    n = len(xs)
    G = christoffel_sym(gm, xs)
    R = sp.zeros(n, n)
    for i in range(n):
        for j in range(n):
            expr = 0
            for m in range(n):
                expr += sp.diff(G[m][i][j], xs[m]) - sp.diff(G[m][i][m], xs[j])
                for k in range(n):
                    expr += G[m][i][j] * G[k][k][m] - G[m][i][k] * G[k][j][m]
            R[i, j] = sp.simplify(expr)
    return R


def lambdify_matrix(M, xs):
    f = sp.lambdify(xs, M, "numpy")

    def call(pts):
        pts = np.asarray(pts, float)
        out = np.asarray(f(*[pts[..., i] for i in range(len(xs))]), float)
        # sympy lambdify puts the matrix axes first
        return np.moveaxis(out, (0, 1), (-2, -1)) if out.ndim > 2 else out

    return call


def christoffel_values(name, n, pts):
    gm, xs = symbolic_metric(name, n)
    G = christoffel_sym(gm, xs)
    flat = [[[sp.lambdify(xs, G[i][j][k], "numpy") for k in range(n)]
             for j in range(n)] for i in range(n)]
    pts = np.asarray(pts, float)
    out = np.zeros(pts.shape[:-1] + (n, n, n))
    args = [pts[..., i] for i in range(n)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[..., i, j, k] = flat[i][j][k](*args)
    return out


def ricci_values(name, n, pts):
    gm, xs = symbolic_metric(name, n)
    R = ricci_sym(gm, xs)
    fn = [[sp.lambdify(xs, R[i, j], "numpy") for j in range(n)]
          for i in range(n)]
    pts = np.asarray(pts, float)
    out = np.zeros(pts.shape[:-1] + (n, n))
    args = [pts[..., i] for i in range(n)]
    for i in range(n):
        for j in range(n):
            out[..., i, j] = fn[i][j](*args)
    return out


def metric_deriv_values(name, n, pts):
    """d_k g_ij from symbolic differentiation."""
    gm, xs = symbolic_metric(name, n)
    pts = np.asarray(pts, float)
    out = np.zeros(pts.shape[:-1] + (n, n, n))
    args = [pts[..., i] for i in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                fn = sp.lambdify(xs, sp.diff(gm[i, j], xs[k]), "numpy")
                out[..., k, i, j] = fn(*args)
    return out
