"""Stokes solves with a boundary-layer manufactured solution.

Exact velocity is the curl of the stream function

    xi(x, y) = x^2 (1-x)^2 y^2 (1-y)^2 exp(-x / eps),

so it vanishes on the boundary of the unit square and is divergence free;
the pressure ``exp(-x / eps)`` is shifted to zero mean.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .geometry import cell_aspect_ratios
from .infsup import Pair
from .mesh import Mesh2D, SplitStrategy, clough_tocher_refine, generate_shishkin_mesh
from .quadrature import ERROR_RULE_DEGREE, simplex_rule


MAX_REFINEMENT_STEPS = 2


class StokesError(RuntimeError):
    pass


def default_tau(epsilon: float, log_base: float = 10.0) -> float:
    """Layer width ``3 eps |log eps|``; base-10 logarithm by default."""
    return 3.0 * epsilon * abs(math.log(epsilon, log_base))


def _poly_derivs(t):
    """``t^2 (1-t)^2`` and its first three derivatives."""
    return (t**2 * (1 - t) ** 2, 2 * t - 6 * t**2 + 4 * t**3,
            2 - 12 * t + 12 * t**2, -12 + 24 * t)


class ManufacturedSolution:
    """Closed-form velocity, pressure and forcing.

    ``with_pressure=False`` drops the pressure (and its gradient from the
    forcing), leaving a pure viscous problem.
    """

    def __init__(self, epsilon: float = 0.01, nu: float = 1.0, with_pressure: bool = True):
        if not (epsilon > 0 and nu > 0):
            raise ValueError("epsilon and nu must be positive")
        self.epsilon = float(epsilon)
        self.nu = float(nu)
        self.with_pressure = with_pressure
        e = self.epsilon
        self.pressure_mean = e * -math.expm1(-1.0 / e) if with_pressure else 0.0

    def _g(self, x):
        """``g(x) = x^2 (1-x)^2 exp(-x/eps)`` and derivatives up to third."""
        P = _poly_derivs(x)
        E = np.exp(-x / self.epsilon)
        c = -1.0 / self.epsilon
        return (P[0] * E,
                (P[1] + c * P[0]) * E,
                (P[2] + 2 * c * P[1] + c * c * P[0]) * E,
                (P[3] + 3 * c * P[2] + 3 * c * c * P[1] + c**3 * P[0]) * E)

    def stream(self, X):
        X = np.asarray(X, float)
        return self._g(X[:, 0])[0] * _poly_derivs(X[:, 1])[0]

    def velocity(self, X):
        X = np.asarray(X, float)
        g = self._g(X[:, 0])
        h = _poly_derivs(X[:, 1])
        return np.column_stack([g[0] * h[1], -g[1] * h[0]])

    def velocity_gradient(self, X):
        """``(N, 2, 2)``; entry ``[n, i, j] = d u_i / d x_j``."""
        X = np.asarray(X, float)
        g = self._g(X[:, 0])
        h = _poly_derivs(X[:, 1])
        out = np.empty((len(X), 2, 2))
        out[:, 0, 0] = g[1] * h[1]
        out[:, 0, 1] = g[0] * h[2]
        out[:, 1, 0] = -g[2] * h[0]
        out[:, 1, 1] = -g[1] * h[1]
        return out

    def velocity_laplacian(self, X):
        X = np.asarray(X, float)
        g = self._g(X[:, 0])
        h = _poly_derivs(X[:, 1])
        return np.column_stack([g[2] * h[1] + g[0] * h[3], -(g[3] * h[0] + g[1] * h[2])])

    def pressure_raw(self, X):
        X = np.asarray(X, float)
        if not self.with_pressure:
            return np.zeros(len(X))
        return np.exp(-X[:, 0] / self.epsilon)

    def pressure(self, X):
        return self.pressure_raw(X) - self.pressure_mean

    def pressure_gradient(self, X):
        X = np.asarray(X, float)
        out = np.zeros((len(X), 2))
        if self.with_pressure:
            out[:, 0] = -np.exp(-X[:, 0] / self.epsilon) / self.epsilon
        return out

    def forcing(self, X):
        return -self.nu * self.velocity_laplacian(X) + self.pressure_gradient(X)

    def __repr__(self):
        return f"ManufacturedSolution(epsilon={self.epsilon}, nu={self.nu})"


def exact_solution(epsilon: float, nu: float = 1.0) -> ManufacturedSolution:
    return ManufacturedSolution(epsilon, nu)


@dataclass
class SolveReport:
    dofs_v: int
    dofs_p: int
    l2_vel: float
    h1_vel: float
    l2_prs: float
    linf_div: float
    h1_uh: float
    solver_residual: float
    max_aspect: float

    def as_row(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class StokesSolution:
    velocity: fem.FEFunction
    pressure: fem.FEFunction
    report: SolveReport


def load_vector(space: fem.FESpace, f, rule=None) -> np.ndarray:
    """``(f, phi_i)`` for the velocity space, integrated with ``rule``."""
    rule = rule or simplex_rule(ERROR_RULE_DEGREE)
    corners, area, _ = space.geometry
    X = rule.physical_points(corners)
    fv = np.asarray(f(X.reshape(-1, 2)), float).reshape(X.shape)      # (C,n,2)
    phi = fem.p2_values(rule.points)                                     # (n,6)
    loc = np.einsum("c,q,qa,cqd->cad", area, rule.weights, phi, fv).reshape(len(area), 12)
    return np.bincount(space.cell_dofs.ravel(), loc.ravel(), minlength=space.dof_count)


def solve_stokes(mesh: Mesh2D, solution: ManufacturedSolution, forcing=None, pair="sv",
                 quad_degree: int = ERROR_RULE_DEGREE, matrices_out: dict | None = None,
                 ) -> StokesSolution:
    """Solve ``-nu Lap u + grad p = f, div u = 0`` with no-slip walls.

    The saddle system is bordered by one row fixing the pressure mean,
    factorised directly and polished by iterative refinement. ``forcing``
    overrides the manufactured forcing; errors are always measured against
    ``solution``. When ``matrices_out`` is a dict it receives the assembled
    ``K``, ``B`` and ``M``.
    """
    pair = Pair.parse(pair)
    V = fem.build_space(mesh, fem.SpaceKind.VECTOR_P2, homogeneous_dirichlet=True)
    Q = fem.build_space(mesh, pair.pressure_kind)
    free = V.free_dofs
    if len(free) == 0:
        raise StokesError("no interior velocity dofs")
    K = fem.reduce_dirichlet(fem.assemble_gradient_stiffness(V), V)
    B = fem.reduce_dirichlet(fem.assemble_divergence(V, Q), V, axis="cols")
    M = fem.assemble_mass(Q)
    if matrices_out is not None:
        matrices_out.update(K=K, B=B, M=M)
    m = np.asarray(M @ np.ones(Q.dof_count)).ravel()
    nv, npr = len(free), Q.dof_count
    A = sp.bmat([[solution.nu * K, -B.T, None],
                 [-B, None, sp.csr_matrix(m[:, None])],
                 [None, sp.csr_matrix(m[None, :]), None]], format="csc")
    rule = simplex_rule(quad_degree)
    f = load_vector(V, forcing or solution.forcing, rule)[free]
    rhs = np.concatenate([f, np.zeros(npr + 1)])
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise StokesError(f"saddle factorisation failed: {exc}") from exc
    x = lu.solve(rhs)
    # pressure rows scale with cell area; refinement restores pointwise div u = 0
    for _ in range(MAX_REFINEMENT_STEPS):
        x += lu.solve(rhs - A @ x)
    res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if not np.isfinite(res) or res > 1e-8:
        raise StokesError(f"saddle solve breakdown, relative residual {res:.3e}")
    u = np.zeros(V.dof_count)
    u[free] = x[:nv]
    uh = fem.FEFunction(V, u)
    ph = fem.FEFunction(Q, x[nv:nv + npr])
    ev = fem.error_norms(uh, solution.velocity, solution.velocity_gradient, rule)
    ep = fem.error_norms(ph, solution.pressure, None, rule)
    report = SolveReport(
        dofs_v=V.dof_count, dofs_p=npr, l2_vel=ev.l2, h1_vel=ev.h1_semi, l2_prs=ep.l2,
        linf_div=ev.linf_div, h1_uh=fem.h1_seminorm(uh), solver_residual=float(res),
        max_aspect=float(cell_aspect_ratios(mesh.vertices, mesh.cells).max()))
    return StokesSolution(uh, ph, report)


COMPARISON_FIELDS = ["N", "strategy", "dofs_v", "dofs_p", "l2_vel", "h1_vel", "l2_prs",
                     "linf_div", "max_aspect"]


def compare_strategies(N_list, epsilon: float = 0.01, tau: float | None = None,
                       nu: float = 1.0, strategies=("barycenter", "incenter")) -> list[dict]:
    """One Clough-Tocher split of the Shishkin mesh per strategy and ``N``,
    solved against the boundary-layer solution. Rows carry every
    ``SolveReport`` field; ``COMPARISON_FIELDS`` selects the CSV columns."""
    tau = default_tau(epsilon) if tau is None else tau
    sol = ManufacturedSolution(epsilon, nu)
    rows = []
    for N in N_list:
        parent = generate_shishkin_mesh(N, tau)
        for s in strategies:
            s = SplitStrategy.parse(s)
            r = solve_stokes(clough_tocher_refine(parent, s), sol).report
            rows.append({"N": int(N), "strategy": s.value, **r.as_row()})
    return rows


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in (r[k] for k in fields)])
    return buf.getvalue()
