"""Quadrature rules on triangles in barycentric coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Points are barycentric ``(n, 3)``; weights sum to one, so
    ``area * weights @ f(points)`` approximates the integral over a cell."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """Map to cells with corners ``(C, 3, 2)``; returns ``(C, n, 2)``."""
        return np.einsum("qk,ckd->cqd", self.points, corners)


def _orbit_rule(groups, degree):
    pts, wts = [], []
    for w, bary in groups:
        a, b, c = bary
        orbit = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
        for o in sorted(orbit):
            pts.append(o)
            wts.append(w)
    pts, wts = np.array(pts), np.array(wts)
    return QuadratureRule(pts, wts / wts.sum(), degree)


@lru_cache(maxsize=None)
def strang_fix_6() -> QuadratureRule:
    """Six-point symmetric rule, exact to degree 4 (closed-form nodes)."""
    s = math.sqrt(213125.0 - 53320.0 * math.sqrt(10.0))
    r = math.sqrt(38.0 - 44.0 * math.sqrt(0.4))
    a, wa = (8.0 - math.sqrt(10.0) + r) / 18.0, (620.0 + s) / 3720.0
    b, wb = (8.0 - math.sqrt(10.0) - r) / 18.0, (620.0 - s) / 3720.0
    return _orbit_rule([(wa, (a, a, 1 - 2 * a)), (wb, (b, b, 1 - 2 * b))], 4)


def exact_moment(a: int, b: int) -> float:
    """Average of ``x**a * y**b`` over the reference triangle."""
    return 2.0 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@lru_cache(maxsize=None)
def conical_product(n: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule with ``n*n`` points,
    exact to degree ``2n - 1``."""
    # x = u, y = (1 - u) v; dA = (1 - u) du dv on [0,1]^2
    u, wu = roots_jacobi(n, 1.0, 0.0)      # weight (1 - t) on [-1, 1]
    u = 0.5 * (u + 1.0)
    wu = wu / 4.0
    v, wv = roots_legendre(n)
    v = 0.5 * (v + 1.0)
    wv = wv / 2.0
    U, Vv = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = ((1.0 - U) * Vv).ravel()
    w = np.outer(wu, wv).ravel() * 2.0     # normalise by the area 1/2
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(pts, w / w.sum(), 2 * n - 1)


def simplex_rule(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree <= 4:
        return strang_fix_6()
    return conical_product((degree + 2) // 2)


ASSEMBLY_RULE_DEGREE = 4
ERROR_RULE_DEGREE = 10
