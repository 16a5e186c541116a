"""Finite element spaces and sparse assembly.

Three spaces are supported: continuous quadratic vector fields (velocity),
discontinuous linears and piecewise constants (pressure). Matrices are
returned as :class:`scipy.sparse.csr_matrix`.

Velocity dof numbering: nodes are the mesh vertices followed by the mesh
edges (edge midpoints); node ``n`` carries dofs ``2n`` (x) and ``2n + 1`` (y).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh2D
from .quadrature import ASSEMBLY_RULE_DEGREE, ERROR_RULE_DEGREE, QuadratureRule, simplex_rule


class SpaceKind(enum.Enum):
    VECTOR_P2 = "P2vec"
    P1_DISC = "P1disc"
    P0 = "P0"

    @classmethod
    def parse(cls, value) -> "SpaceKind":
        if isinstance(value, cls):
            return value
        aliases = {"p2": cls.VECTOR_P2, "vectorp2continuous": cls.VECTOR_P2, "p2vec": cls.VECTOR_P2,
                   "p1d": cls.P1_DISC, "p1disc": cls.P1_DISC,
                   "scalarp1discontinuous": cls.P1_DISC, "p0": cls.P0, "scalarp0": cls.P0}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown space kind {value!r}") from None


# --- reference element -----------------------------------------------------

def p2_values(bary: np.ndarray) -> np.ndarray:
    """Scalar P2 shape functions at barycentric points, ``(n, 6)``.

    Local functions 0-2 belong to the vertices, 3-5 to the edges; edge
    function ``3 + k`` lives on the edge opposite vertex ``k``.
    """
    L = np.asarray(bary, float)
    l0, l1, l2 = L[:, 0], L[:, 1], L[:, 2]
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ])


def p2_gradients(bary: np.ndarray, grad_lambda: np.ndarray) -> np.ndarray:
    """Physical gradients of the scalar P2 shape functions.

    ``grad_lambda`` is ``(C, 3, 2)``; the result is ``(C, n, 6, 2)``.
    """
    L = np.asarray(bary, float)
    G = grad_lambda[:, None, :, :]                      # (C,1,3,2)
    Lq = L[None, :, :, None]                            # (1,n,3,1)
    vert = (4.0 * Lq - 1.0) * G                         # (C,n,3,2)
    i1, i2 = [1, 2, 0], [2, 0, 1]
    edge = 4.0 * (Lq[:, :, i1] * G[:, :, i2] + Lq[:, :, i2] * G[:, :, i1])
    return np.concatenate([vert, edge], axis=2)


def cell_geometry(mesh: Mesh2D):
    """Corner coordinates, areas and barycentric gradients of all cells."""
    p = mesh.vertices[mesh.cells]                       # (C,3,2)
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)   # columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    g = np.empty((len(p), 3, 2))
    g[:, 1] = inv[:, 0]
    g[:, 2] = inv[:, 1]
    g[:, 0] = -g[:, 1] - g[:, 2]
    return p, 0.5 * np.abs(det), g


# --- spaces ----------------------------------------------------------------

@dataclass(eq=False)
class FESpace:
    kind: SpaceKind
    mesh: Mesh2D
    dof_count: int
    cell_dofs: np.ndarray = field(repr=False)
    dirichlet_mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_vector(self) -> bool:
        return self.kind is SpaceKind.VECTOR_P2

    @cached_property
    def free_dofs(self) -> np.ndarray:
        if self.dirichlet_mask is None:
            return np.arange(self.dof_count)
        return np.flatnonzero(~self.dirichlet_mask)

    @cached_property
    def geometry(self):
        return cell_geometry(self.mesh)

    def node_coordinates(self) -> np.ndarray:
        """Interpolation nodes of the velocity space (vertices, then edge
        midpoints)."""
        if not self.is_vector:
            raise TypeError("node coordinates are defined for the velocity space only")
        m = self.mesh
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mid])


def build_space(mesh: Mesh2D, kind, homogeneous_dirichlet: bool = False) -> FESpace:
    kind = SpaceKind.parse(kind)
    C = mesh.num_cells
    if kind is SpaceKind.VECTOR_P2:
        V = mesh.num_vertices
        nodes = np.hstack([mesh.cells, V + mesh.cell_edges])          # (C,6)
        cell_dofs = np.empty((C, 12), np.int64)
        cell_dofs[:, 0::2] = 2 * nodes
        cell_dofs[:, 1::2] = 2 * nodes + 1
        n_nodes = V + mesh.num_edges
        mask = None
        if homogeneous_dirichlet:
            on_bnd = np.zeros(n_nodes, bool)
            on_bnd[mesh.boundary_vertices] = True
            on_bnd[V + np.flatnonzero(mesh.boundary_edges)] = True
            mask = np.repeat(on_bnd, 2)
        return FESpace(kind, mesh, 2 * n_nodes, cell_dofs, mask)
    if kind is SpaceKind.P1_DISC:
        return FESpace(kind, mesh, 3 * C, np.arange(3 * C).reshape(C, 3))
    return FESpace(kind, mesh, C, np.arange(C).reshape(C, 1))


@dataclass(eq=False)
class FEFunction:
    space: FESpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, float)
        if self.coefficients.shape != (self.space.dof_count,):
            raise ValueError(
                f"expected {self.space.dof_count} coefficients, got {self.coefficients.shape}")


# --- assembly --------------------------------------------------------------

def _assemble(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    C, nr, nc = local.shape
    I = np.broadcast_to(rows[:, :, None], (C, nr, nc)).ravel()
    J = np.broadcast_to(cols[:, None, :], (C, nr, nc)).ravel()
    A = sp.coo_matrix((local.ravel(), (I, J)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _rule(degree=None) -> QuadratureRule:
    return simplex_rule(ASSEMBLY_RULE_DEGREE if degree is None else degree)


def scalar_p2_stiffness_local(space: FESpace) -> np.ndarray:
    _, area, g = space.geometry
    rule = _rule()
    G = p2_gradients(rule.points, g)                     # (C,n,6,2)
    return np.einsum("c,q,cqid,cqjd->cij", area, rule.weights, G, G)


def assemble_gradient_stiffness(space: FESpace) -> sp.csr_matrix:
    """Vector Laplacian ``(grad phi_i, grad phi_j)`` on the full velocity
    space (no boundary rows removed)."""
    if not space.is_vector:
        raise TypeError("gradient stiffness needs the P2 velocity space")
    S = scalar_p2_stiffness_local(space)
    C = len(S)
    K = np.zeros((C, 12, 12))
    K[:, 0::2, 0::2] = S
    K[:, 1::2, 1::2] = S
    return _assemble(K, space.cell_dofs, space.cell_dofs, (space.dof_count,) * 2)


def _pressure_values(kind: SpaceKind, bary: np.ndarray) -> np.ndarray:
    if kind is SpaceKind.P1_DISC:
        return np.asarray(bary, float)
    if kind is SpaceKind.P0:
        return np.ones((len(bary), 1))
    raise TypeError(f"{kind} is not a pressure space")


def divergence_local(vel: FESpace, prs: FESpace) -> np.ndarray:
    _, area, g = vel.geometry
    rule = _rule()
    G = p2_gradients(rule.points, g)                     # (C,n,6,2)
    psi = _pressure_values(prs.kind, rule.points)        # (n,np)
    D = np.einsum("c,q,qp,cqad->cpad", area, rule.weights, psi, G)
    C, npl = D.shape[:2]
    return D.reshape(C, npl, 12)                         # (a, d) -> 2a + d


def assemble_divergence(vel: FESpace, prs: FESpace) -> sp.csr_matrix:
    """``B[q, j] = (div phi_j, psi_q)``, shape (pressure dofs, velocity dofs)."""
    if vel.mesh is not prs.mesh and vel.mesh != prs.mesh:
        raise ValueError("velocity and pressure spaces live on different meshes")
    if not vel.is_vector:
        raise TypeError("divergence needs the P2 velocity space first")
    D = divergence_local(vel, prs)
    return _assemble(D, prs.cell_dofs, vel.cell_dofs, (prs.dof_count, vel.dof_count))


def assemble_mass(space: FESpace) -> sp.csr_matrix:
    _, area, _ = space.geometry
    if space.kind is SpaceKind.P0:
        return sp.diags(area).tocsr()
    rule = _rule()
    psi = _pressure_values(space.kind, rule.points)
    M = np.einsum("c,q,qi,qj->cij", area, rule.weights, psi, psi)
    return _assemble(M, space.cell_dofs, space.cell_dofs, (space.dof_count,) * 2)


def reduce_dirichlet(A: sp.spmatrix, space: FESpace, axis="both") -> sp.csr_matrix:
    """Remove constrained velocity rows and/or columns."""
    free = space.free_dofs
    A = sp.csr_matrix(A)
    if axis == "both":
        return A[free][:, free]
    if axis == "cols":
        return A[:, free]
    return A[free]


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) <= rtol * scale


def write_triplets(A, path) -> None:
    """Debug dump: one ``i j value`` line per stored entry."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")


# --- interpolation and evaluation -----------------------------------------

def interpolate(space: FESpace, f) -> FEFunction:
    """Nodal interpolant. ``f`` maps an ``(N, 2)`` point array to values of
    shape ``(N, 2)`` for the velocity space and ``(N,)`` otherwise."""
    m = space.mesh
    if space.is_vector:
        vals = np.asarray(f(space.node_coordinates()), float).reshape(-1, 2)
        return FEFunction(space, vals.ravel())
    if space.kind is SpaceKind.P1_DISC:
        pts = m.vertices[m.cells].reshape(-1, 2)
        return FEFunction(space, np.asarray(f(pts), float).reshape(-1))
    bc = m.vertices[m.cells].mean(axis=1)
    return FEFunction(space, np.asarray(f(bc), float).reshape(-1))


def values_at(fe: FEFunction, bary: np.ndarray) -> np.ndarray:
    """Values at the barycentric points of every cell: ``(C, n)`` or
    ``(C, n, 2)``."""
    sp_ = fe.space
    c = fe.coefficients[sp_.cell_dofs]
    if sp_.is_vector:
        phi = p2_values(bary)
        return np.einsum("qa,cad->cqd", phi, c.reshape(-1, 6, 2))
    return np.einsum("qa,ca->cq", _pressure_values(sp_.kind, bary), c)


def gradients_at(fe: FEFunction, bary: np.ndarray) -> np.ndarray:
    """Gradients at barycentric points: ``(C, n, 2)`` for scalars and
    ``(C, n, 2, 2)`` (component, derivative) for vectors."""
    sp_ = fe.space
    _, _, g = sp_.geometry
    c = fe.coefficients[sp_.cell_dofs]
    if sp_.is_vector:
        G = p2_gradients(bary, g)
        return np.einsum("cqad,cak->cqkd", G, c.reshape(-1, 6, 2))
    if sp_.kind is SpaceKind.P1_DISC:
        return np.broadcast_to(np.einsum("cad,ca->cd", g, c)[:, None, :],
                               (len(c), len(bary), 2)).copy()
    return np.zeros((len(c), len(bary), 2))


def evaluate(fe: FEFunction, cell: int, bary) -> np.ndarray | float:
    """Value of ``fe`` at barycentric point ``bary`` of ``cell``."""
    b = np.asarray(bary, float).reshape(1, 3)
    sp_ = fe.space
    c = fe.coefficients[sp_.cell_dofs[cell]]
    if sp_.is_vector:
        return p2_values(b)[0] @ c.reshape(6, 2)
    return float(_pressure_values(sp_.kind, b)[0] @ c)


@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    h1_semi: float
    linf_div: float


def error_norms(fe: FEFunction, exact, exact_grad=None, rule: QuadratureRule | None = None,
                ) -> ErrorNorms:
    """Quadrature errors of ``fe`` against analytic ``exact``.

    ``exact_grad`` returns ``(N, 2)`` for scalars and ``(N, 2, 2)`` (row =
    component) for vectors; without it ``h1_semi`` is ``nan``. ``linf_div`` is the
    maximum ``|div fe|`` over the quadrature points (``nan`` for scalar
    spaces).
    """
    rule = rule or simplex_rule(ERROR_RULE_DEGREE)
    sp_ = fe.space
    corners, area, _ = sp_.geometry
    X = rule.physical_points(corners)                    # (C,n,2)
    C, n = X.shape[:2]
    flat = X.reshape(-1, 2)
    w = area[:, None] * rule.weights[None, :]
    uh = values_at(fe, rule.points)
    ue = np.asarray(exact(flat), float).reshape(uh.shape)
    d = (uh - ue) ** 2
    l2 = np.sqrt(np.sum(w * (d.sum(axis=-1) if sp_.is_vector else d)))
    gh = gradients_at(fe, rule.points)
    h1 = float("nan")
    if exact_grad is not None:
        ge = np.asarray(exact_grad(flat), float).reshape(gh.shape)
        dg = ((gh - ge) ** 2).reshape(C, n, -1).sum(axis=-1)
        h1 = float(np.sqrt(np.sum(w * dg)))
    linf_div = float("nan")
    if sp_.is_vector:
        linf_div = float(np.max(np.abs(gh[..., 0, 0] + gh[..., 1, 1])))
    return ErrorNorms(float(l2), h1, linf_div)


def h1_seminorm(fe: FEFunction, rule: QuadratureRule | None = None) -> float:
    rule = rule or _rule()
    _, area, _ = fe.space.geometry
    g = gradients_at(fe, rule.points).reshape(len(area), len(rule), -1)
    return float(np.sqrt(np.sum(area[:, None] * rule.weights * (g ** 2).sum(axis=-1))))


def l2_norm(fe: FEFunction, rule: QuadratureRule | None = None) -> float:
    rule = rule or _rule()
    _, area, _ = fe.space.geometry
    v = values_at(fe, rule.points)
    v2 = (v ** 2).sum(axis=-1) if fe.space.is_vector else v ** 2
    return float(np.sqrt(np.sum(area[:, None] * rule.weights * v2)))


def assemble_div_div(space: FESpace) -> sp.csr_matrix:
    """``(div phi_i, div phi_j)`` on the velocity space."""
    if not space.is_vector:
        raise TypeError("div-div needs the P2 velocity space")
    _, area, g = space.geometry
    rule = _rule()
    G = p2_gradients(rule.points, g).reshape(len(area), len(rule), 12)   # (a, d) -> 2a + d
    return _assemble(np.einsum("c,q,cqi,cqj->cij", area, rule.weights, G, G),
                     space.cell_dofs, space.cell_dofs, (space.dof_count,) * 2)
