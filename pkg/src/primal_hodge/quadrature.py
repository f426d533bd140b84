"""Conical-product Gauss rules on the reference simplex.

Used only for non-polynomial integrands (analytic forcing terms and exact
solutions); polynomial pairings go through the exact barycentric formula.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=None)
def simplex_rule(n: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points in the reference simplex ``conv(0, e_1, ..., e_n)`` and weights
    summing to one, exact for polynomials of total degree ``<= degree``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    q = (degree + n) // 2 + 1
    s, w = leggauss(q)
    t = 0.5 * (s + 1.0)
    w = 0.5 * w
    pts, wts = [], []
    for combo in itertools.product(range(q), repeat=n):
        ts = t[list(combo)]
        weight = np.prod(w[list(combo)])
        x = np.empty(n)
        rem = 1.0
        for i in range(n):
            x[i] = rem * ts[i]
            weight *= rem
            rem *= 1.0 - ts[i]
        pts.append(x)
        wts.append(weight)
    pts = np.array(pts)
    wts = np.array(wts)
    return pts, wts / wts.sum()


def triangle_points(vertices: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points for a batch of triangles.

    ``vertices`` has shape ``(F, 3, 2)``.  Returns points ``(F, Q, 2)`` and
    weights ``(F, Q)`` that already include the cell areas.
    """
    ref, w = simplex_rule(2, degree)
    v0 = vertices[:, 0, :]
    e1 = vertices[:, 1, :] - v0
    e2 = vertices[:, 2, :] - v0
    pts = v0[:, None, :] + ref[None, :, 0:1] * e1[:, None, :] + ref[None, :, 1:2] * e2[:, None, :]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * w[None, :]
