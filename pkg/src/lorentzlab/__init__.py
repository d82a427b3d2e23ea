"""Desk-scale numerical laboratory for C1 Lorentzian geometry.

Modules
-------
chart       chart windows, metric/weight fields, catalog metrics
connection  Christoffel symbols, distributional curvature pairings
geodesic    geodesic integration, maximizer checks, boundary-value shooting
timesep     causal relations and the Lorentz time separation
mollify     causality-controlled smooth approximations
busemann    Busemann functions of rays and lines, co-rays, adaptedness
dalembert   comparison functions and the weighted p-d'Alembert machinery
splitting   Busemann fields, gradient flow, cross-sections, product checks
cli         scenario runner and single-operation conveniences
"""

from . import chart, connection, geodesic, timesep, errors

__all__ = ["chart", "connection", "geodesic", "timesep", "mollify",
           "busemann", "dalembert", "splitting", "errors"]

__version__ = "0.1.0"
