"""Single-triangle geometry: metrics, split points, Clough-Tocher child
quality, the map from the right reference triangle, and checks of the
refinement bounds.

Labeling convention: edges are sorted ``h1 <= h2 <= h3``; vertex ``z_i`` and
angle ``alpha_i`` are opposite edge ``e_i`` of length ``h_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import DegenerateCellError, SplitStrategy

SLACK = 1e-9


class DegenerateTriangleError(DegenerateCellError):
    pass


def _as_points(p1, p2, p3):
    p = np.array([p1, p2, p3], dtype=float).reshape(3, 2)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite triangle coordinate")
    return p


def _cross(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _angle(u, v):
    return math.atan2(abs(_cross(u, v)), float(np.dot(u, v)))


def _check_area(p):
    area2 = _cross(p[1] - p[0], p[2] - p[0])
    scale = max(np.ptp(p[:, 0]), np.ptp(p[:, 1]))
    if not abs(area2) > 1e-14 * scale * scale:
        raise DegenerateTriangleError(f"degenerate triangle {p.tolist()}")
    return 0.5 * abs(area2)


@dataclass(frozen=True)
class TriangleMetrics:
    """Metrics of one triangle in sorted labeling.

    ``vertices[i]`` is the input point opposite the edge of length ``h[i]``;
    ``vertex_order[i]`` is its index among the three inputs.
    """

    h: tuple
    alpha: tuple
    area: float
    perimeter: float
    rho_in: float
    aspect: float
    a_T: float
    vertex_order: tuple
    vertices: np.ndarray = field(repr=False)

    @property
    def h_T(self) -> float:
        return self.h[2]

    @property
    def alpha_max(self) -> float:
        return self.alpha[2]

    @property
    def alpha_min(self) -> float:
        return self.alpha[0]

    @property
    def inradius(self) -> float:
        return 0.5 * self.rho_in


def analyze_triangle(p1, p2, p3) -> TriangleMetrics:
    p = _as_points(p1, p2, p3)
    area = float(_check_area(p))
    opp = [np.linalg.norm(p[(k + 2) % 3] - p[(k + 1) % 3]) for k in range(3)]
    # stable sort keeps original vertex index as the tie breaker
    order = tuple(sorted(range(3), key=lambda k: (opp[k], k)))
    h = tuple(float(opp[k]) for k in order)
    alpha = []
    for k in order:
        a, b, c = p[k], p[(k + 1) % 3], p[(k + 2) % 3]
        alpha.append(_angle(b - a, c - a))
    perimeter = math.fsum(h)
    rho_in = 4.0 * area / perimeter
    return TriangleMetrics(
        h=h, alpha=tuple(alpha), area=area, perimeter=perimeter, rho_in=rho_in,
        aspect=float(perimeter * h[2] / (4.0 * area)), a_T=float(2.0 * area / h[2]),
        vertex_order=order, vertices=p[list(order)])


def triangle_angles(p1, p2, p3) -> np.ndarray:
    """Interior angles at the three input vertices, in input order."""
    p = _as_points(p1, p2, p3)
    return np.array([_angle(p[(k + 1) % 3] - p[k], p[(k + 2) % 3] - p[k]) for k in range(3)])


def aspect_ratio(p1, p2, p3) -> float:
    return analyze_triangle(p1, p2, p3).aspect


def cell_aspect_ratios(vertices, cells) -> np.ndarray:
    """Vectorised aspect ratio of every cell of a mesh."""
    p = np.asarray(vertices, float)[np.asarray(cells)]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    h = np.hypot(e[..., 0], e[..., 1])
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return h.sum(axis=1) * h.max(axis=1) / (4.0 * area)


def split_point(p1, p2, p3, strategy) -> np.ndarray:
    """Barycenter or incenter of the triangle."""
    strategy = SplitStrategy.parse(strategy)
    p = _as_points(p1, p2, p3)
    _check_area(p)
    d = p[1:] - p[0]
    if strategy is SplitStrategy.BARYCENTER:
        return p[0] + d.sum(axis=0) / 3.0
    w = np.array([np.linalg.norm(p[(k + 2) % 3] - p[(k + 1) % 3]) for k in range(3)])
    return p[0] + (w[1:, None] * d).sum(axis=0) / w.sum()


@dataclass(frozen=True)
class SplitMetrics:
    """Clough-Tocher children ``K_i`` (``K_i`` shares edge ``e_i`` with T)."""

    z0: np.ndarray
    k: tuple
    child_aspect: tuple
    child_angles: tuple
    max_child_angle: float
    children: np.ndarray = field(repr=False)

    @property
    def aspect(self) -> float:
        return max(self.child_aspect)


def split_metrics(p1, p2, p3, strategy, metrics: TriangleMetrics | None = None) -> SplitMetrics:
    m = metrics or analyze_triangle(p1, p2, p3)
    z = m.vertices
    z0 = split_point(*z, strategy)
    if SplitStrategy.parse(strategy) is SplitStrategy.BARYCENTER:
        weights = (1.0 / 3.0,) * 3
    else:
        weights = tuple(h / m.perimeter for h in m.h)
    children, k, asp, angs = [], [], [], []
    for i in range(3):
        # K_i: endpoints of e_i (z_{i+1}, z_{i+2}) plus the split point, ccw
        a, b = z[(i + 1) % 3], z[(i + 2) % 3]
        tri = np.array([a, b, z0])
        if _cross(b - a, z0 - a) < 0:
            tri = tri[[1, 0, 2]]
        children.append(tri)
        # altitude over e_i is the barycentric weight of z_i times the
        # parent altitude; avoids cancellation on thin, far-off triangles
        k.append(weights[i] * 2.0 * m.area / m.h[i])
        cm = analyze_triangle(*tri)
        asp.append(cm.aspect)
        angs.append(tuple(triangle_angles(a, b, z0)))
    return SplitMetrics(z0=z0, k=tuple(k), child_aspect=tuple(asp), child_angles=tuple(angs),
                        max_child_angle=max(max(a) for a in angs), children=np.array(children))


def check_lac(alpha_max_or_metrics, delta: float) -> bool:
    """Large angle condition: largest angle strictly below ``pi - delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = getattr(alpha_max_or_metrics, "alpha_max", alpha_max_or_metrics)
    return bool(a < math.pi - delta)


def check_triangle_lac(p1, p2, p3, delta: float) -> bool:
    return check_lac(analyze_triangle(p1, p2, p3), delta)


@dataclass(frozen=True)
class ReferenceMap:
    """Affine map ``x = A @ x_ref + b`` from the right reference triangle with
    vertices ``(0,0)``, ``(h1,0)``, ``(0,h2)`` onto T."""

    A: np.ndarray
    b: np.ndarray
    tilde_h: tuple
    tilde_k: tuple
    tilde_aspect: float
    norm_A: float
    norm_A_frobenius: float
    norm_A_inv: float

    def forward(self, x_ref):
        return np.asarray(x_ref, float) @ self.A.T + self.b

    def inverse(self, x):
        return np.linalg.solve(self.A, (np.asarray(x, float) - self.b).T).T

    @property
    def reference_vertices(self) -> np.ndarray:
        """Reference images of ``z1, z2, z3``."""
        h1, h2, _ = self.tilde_h
        return np.array([[0.0, h2], [h1, 0.0], [0.0, 0.0]])


def reference_map(p1, p2, p3, strategy) -> ReferenceMap:
    m = analyze_triangle(p1, p2, p3)
    z1, z2, z3 = m.vertices
    h1, h2, _ = m.h
    A = np.column_stack([(z2 - z3) / h1, (z1 - z3) / h2])
    b = z3.copy()
    z0 = split_point(z1, z2, z3, strategy)
    # image of the split point is (k2~, k1~)
    k2, k1 = np.linalg.solve(A, z0 - b)
    th = (h1, h2, math.hypot(h1, h2))
    return ReferenceMap(
        A=A, b=b, tilde_h=th, tilde_k=(float(k2), float(k1)), tilde_aspect=h2 / h1,
        norm_A=float(np.linalg.norm(A, 2)), norm_A_frobenius=float(np.linalg.norm(A)),
        norm_A_inv=float(np.linalg.norm(np.linalg.inv(A), 2)))


def hat_seminorm_sq(p1, p2, p3, strategy) -> float:
    """Squared H1 seminorm of the piecewise-linear hat function of the split
    point, ``1/2 * sum(h_i / k_i)``."""
    m = analyze_triangle(p1, p2, p3)
    s = split_metrics(*m.vertices, strategy, metrics=m)
    return 0.5 * math.fsum(h / k for h, k in zip(m.h, s.k))


@dataclass
class BoundsReport:
    aspect: float
    a_over_h: float
    inc_aspect: float
    inc_bounds: tuple
    bary_aspect: float
    bary_bounds: tuple
    sin_gamma: tuple
    sin_bound: float
    gamma3: float
    gamma3_bound: float
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _le(a, b):
    return a <= b + SLACK * max(abs(a), abs(b))


def lemma_bounds_report(p1, p2, p3) -> BoundsReport:
    """Evaluate the child aspect bounds of both refinements and the largest
    angle bound of the barycenter child on the longest edge.

    Every inequality is tested with relative slack ``SLACK``.
    """
    m = analyze_triangle(p1, p2, p3)
    rho = m.aspect
    q = m.a_T / m.h_T
    inc = split_metrics(*m.vertices, SplitStrategy.INCENTER, metrics=m)
    bary = split_metrics(*m.vertices, SplitStrategy.BARYCENTER, metrics=m)
    inc_lo, inc_hi = 2.0 * rho, 2.0 * (1.0 + q) * rho
    bary_lo, bary_hi = 3.0 * rho / (1.0 + q), 3.0 * rho

    # barycenter child K3 on the longest edge: angles at z1, z2 and at z0
    z1, z2, _ = m.vertices
    g1, g2, g3 = triangle_angles(z1, z2, bary.z0)
    sin_bound = 3.0 * q
    g3_bound = 2.0 * math.asin(min(1.0, sin_bound))
    checks = {
        "inc_lower": _le(inc_lo, inc.aspect),
        "inc_upper": _le(inc.aspect, inc_hi),
        "bary_lower": _le(bary_lo, bary.aspect),
        "bary_upper": _le(bary.aspect, bary_hi),
        "sin_gamma1": _le(math.sin(g1), sin_bound),
        "sin_gamma2": _le(math.sin(g2), sin_bound),
        "gamma3": _le(math.pi - g3, g3_bound),
    }
    return BoundsReport(
        aspect=rho, a_over_h=q, inc_aspect=inc.aspect, inc_bounds=(inc_lo, inc_hi),
        bary_aspect=bary.aspect, bary_bounds=(bary_lo, bary_hi),
        sin_gamma=(math.sin(g1), math.sin(g2)), sin_bound=sin_bound, gamma3=g3,
        gamma3_bound=g3_bound, checks=checks)


def incenter_children_keep_lac(p1, p2, p3, delta: float) -> bool:
    """True when every incenter child satisfies LAC(delta/2); meaningful
    when the parent satisfies LAC(delta)."""
    s = split_metrics(p1, p2, p3, SplitStrategy.INCENTER)
    return all(_le(max(a), math.pi - 0.5 * delta) for a in s.child_angles)
