"""Discrete inf-sup constants.

The global constant of a velocity/pressure pair is

    beta = min_{q, mean(q) = 0}  sqrt(q' S q / q' M q),   S = B K^{-1} B',

with ``K`` the Dirichlet-reduced vector Laplacian, ``B`` the divergence
matrix and ``M`` the pressure mass matrix.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .geometry import analyze_triangle, cell_aspect_ratios
from .mesh import Mesh2D, SplitStrategy, clough_tocher_refine, generate_unit_square_mesh

log = logging.getLogger(__name__)

MAX_DENSE_PRESSURE_DOFS = 100_000


class Pair(enum.Enum):
    SV_P2P1D = "sv"
    P2P0 = "p2p0"

    @classmethod
    def parse(cls, value) -> "Pair":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "")
        if v in ("sv", "svp2p1d", "p2p1d"):
            return cls.SV_P2P1D
        if v == "p2p0":
            return cls.P2P0
        raise ValueError(f"unknown element pair {value!r}")

    @property
    def pressure_kind(self) -> fem.SpaceKind:
        return fem.SpaceKind.P1_DISC if self is Pair.SV_P2P1D else fem.SpaceKind.P0


class InfSupError(RuntimeError):
    pass


@dataclass(eq=False)
class StokesOperators:
    """Dirichlet-reduced operators of a velocity/pressure pair."""

    velocity: fem.FESpace
    pressure: fem.FESpace
    K: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix

    @classmethod
    def build(cls, mesh: Mesh2D, pair) -> "StokesOperators":
        pair = Pair.parse(pair)
        V = fem.build_space(mesh, fem.SpaceKind.VECTOR_P2, homogeneous_dirichlet=True)
        Q = fem.build_space(mesh, pair.pressure_kind)
        if len(V.free_dofs) == 0:
            raise InfSupError("no interior velocity dofs; stiffness matrix is empty")
        K = fem.reduce_dirichlet(fem.assemble_gradient_stiffness(V), V)
        B = fem.reduce_dirichlet(fem.assemble_divergence(V, Q), V, axis="cols")
        return cls(V, Q, K, B, fem.assemble_mass(Q))

    @property
    def constant_mode(self) -> np.ndarray:
        """``M @ 1``: the functional ``q -> integral of q``."""
        return np.asarray(self.M @ np.ones(self.M.shape[0])).ravel()


def _factor(A: sp.spmatrix, what: str):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise InfSupError(f"{what} is singular: {exc}") from exc


def schur_complement(ops: StokesOperators) -> np.ndarray:
    """Dense ``B K^{-1} B'``, formed column by column from one factorisation."""
    lu = _factor(ops.K, "velocity stiffness")
    X = lu.solve(ops.B.T.toarray())
    S = np.asarray(ops.B @ X)
    return 0.5 * (S + S.T)


def mean_zero_basis(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis ``(n, n-1)`` of the vectors ``q`` with ``m @ q = 0``
    (a Householder reflector's trailing columns)."""
    v = _householder_vector(m)
    return (np.eye(len(m)) - 2.0 * np.outer(v, v))[:, 1:]


def _reflect(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(H A H)[1:, 1:]`` for ``H = I - 2 v v'`` without forming H."""
    Av = A @ v
    vAv = v @ Av
    HAH = A - 2.0 * np.outer(v, Av) - 2.0 * np.outer(Av, v) + 4.0 * vAv * np.outer(v, v)
    return HAH[1:, 1:]


def _householder_vector(m):
    v = m / np.linalg.norm(m)
    v = v.copy()
    v[0] += math.copysign(1.0, v[0]) if v[0] != 0 else 1.0
    return v / np.linalg.norm(v)


def _dense_min_eig(S: np.ndarray, M: np.ndarray, m: np.ndarray) -> float:
    v = _householder_vector(m)
    A = _reflect(S, v)
    Bm = _reflect(M, v)
    lam = sla.eigh(0.5 * (A + A.T), 0.5 * (Bm + Bm.T), eigvals_only=True,
                   subset_by_index=[0, 0])[0]
    return float(lam)


def _iterative_min_eig(ops: StokesOperators, tol=1e-10, block=4, maxiter=500) -> float:
    """Inverse subspace iteration on ``S q = lam M q`` over mean-zero q.

    ``S^{-1}`` is applied through one factorisation of the bordered saddle
    matrix ``[[K, B', 0], [B, 0, m], [0, m', 0]]``.
    """
    nv, npr = ops.K.shape[0], ops.B.shape[0]
    m = ops.constant_mode
    Aug = sp.bmat([[ops.K, ops.B.T, None],
                   [ops.B, None, sp.csr_matrix(m[:, None])],
                   [None, sp.csr_matrix(m[None, :]), None]], format="csc")
    lu = _factor(Aug, "bordered saddle matrix")
    klu = _factor(ops.K, "velocity stiffness")
    M = ops.M

    def apply_S(Q):
        return ops.B @ klu.solve(np.asarray(ops.B.T @ Q))

    def apply_Sinv(R):
        rhs = np.zeros((nv + npr + 1, R.shape[1]))
        rhs[nv:nv + npr] = R
        return -lu.solve(rhs)[nv:nv + npr]

    def project(Q):
        # remove the constant: q -> q - (m.q / m.1) 1
        return Q - np.outer(np.ones(npr), (m @ Q) / m.sum())

    rng = np.random.default_rng(0)
    k = min(block, npr - 1)
    Q = project(rng.standard_normal((npr, k)))
    lam_old = None
    for it in range(maxiter):
        Q = project(apply_Sinv(M @ Q))
        # Rayleigh-Ritz on span(Q)
        As = Q.T @ apply_S(Q)
        Ms = Q.T @ (M @ Q)
        w, Y = sla.eigh(0.5 * (As + As.T), 0.5 * (Ms + Ms.T))
        Q = Q @ Y
        Q /= np.sqrt(np.einsum("ij,ij->j", Q, M @ Q))
        lam = float(w[0])
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            log.debug("inverse iteration converged in %d steps", it + 1)
            return lam
        lam_old = lam
    q = Q[:, 0]
    res = np.linalg.norm(apply_S(q[:, None])[:, 0] - lam * (M @ q))
    raise InfSupError(f"inverse iteration did not converge in {maxiter} steps "
                      f"(residual {res:.3e}, lambda {lam:.6e})")


def global_infsup(mesh: Mesh2D, pair="sv", iterative: bool = False) -> float:
    """Inf-sup constant of the pair on ``mesh`` with no-slip velocity.

    The dense path forms the Schur complement explicitly; the iterative
    path uses inverse subspace iteration and scales to larger meshes.
    """
    ops = StokesOperators.build(mesh, pair)
    if ops.B.shape[0] < 2:
        raise InfSupError("pressure space has no mean-zero functions")
    if iterative:
        lam = _iterative_min_eig(ops)
    else:
        if ops.B.shape[0] > MAX_DENSE_PRESSURE_DOFS:
            raise InfSupError(f"{ops.B.shape[0]} pressure dofs exceed the dense limit; "
                              "use the iterative mode")
        S = schur_complement(ops)
        lam = _dense_min_eig(S, ops.M.toarray(), ops.constant_mode)
    if not lam > 0 or not math.isfinite(lam):
        raise InfSupError(f"non-positive smallest eigenvalue {lam:.3e}")
    return math.sqrt(lam)


# --- local (macro element) stability --------------------------------------

@dataclass(frozen=True)
class LocalStabilityResult:
    beta_local: float
    interior_dof_count: int
    divergence_rank: int
    aspect: float
    G: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)


def macro_element_matrices(p1, p2, p3, strategy):
    """Interior-dof stiffness and divergence Gram matrices of one
    Clough-Tocher macro element."""
    m = analyze_triangle(p1, p2, p3)
    tri = Mesh2D(m.vertices if _ccw(m.vertices) else m.vertices[[0, 2, 1]], [[0, 1, 2]])
    ct = clough_tocher_refine(tri, strategy)
    V = fem.build_space(ct, fem.SpaceKind.VECTOR_P2, homogeneous_dirichlet=True)
    free = V.free_dofs
    K = fem.assemble_gradient_stiffness(V)[free][:, free].toarray()
    G = fem.assemble_div_div(V)[free][:, free].toarray()
    return 0.5 * (K + K.T), 0.5 * (G + G.T), m


def _ccw(p):
    d1, d2 = p[1] - p[0], p[2] - p[0]
    return d1[0] * d2[1] - d1[1] * d2[0] > 0


def local_infsup(p1, p2, p3, strategy) -> LocalStabilityResult:
    """Largest ``beta`` with ``beta |v|_1 <= ||div v||`` over velocities of
    the macro element vanishing on its boundary."""
    K, G, m = macro_element_matrices(p1, p2, p3, strategy)
    lam = sla.eigh(G, K, eigvals_only=True)
    rank = int(np.linalg.matrix_rank(G, tol=1e-12 * np.abs(G).max()))
    return LocalStabilityResult(
        beta_local=math.sqrt(max(lam[0], 0.0)), interior_dof_count=K.shape[0],
        divergence_rank=rank, aspect=m.aspect, G=G, K=K)


def compose_beta(beta0: float, beta_star: float) -> float:
    """Lower bound for the Scott-Vogelius constant from the P2-P0 constant
    ``beta0`` and the smallest local constant ``beta_star``."""
    if not (beta0 > 0 and beta_star > 0):
        raise ValueError("both constants must be positive")
    return beta0 * beta_star / (beta_star + beta0 + 1.0)


# --- tables ----------------------------------------------------------------

@dataclass(frozen=True)
class InfSupRow:
    level: int
    beta: float
    aspect: float
    rate: float | None


@dataclass
class InfSupReport:
    rows: list
    pair: Pair = Pair.SV_P2P1D
    strategy: SplitStrategy | None = None

    @property
    def betas(self):
        return [r.beta for r in self.rows]

    @property
    def aspects(self):
        return [r.aspect for r in self.rows]

    @property
    def rates(self):
        return [r.rate for r in self.rows]

    def to_csv(self, precision: int | None = None) -> str:
        """CSV ``level,beta,aspect,rate``; full precision unless
        ``precision`` decimals are requested."""
        def fmt(x):
            if x is None:
                return ""
            return repr(float(x)) if precision is None else f"{x:.{precision}f}"

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "beta", "aspect", "rate"])
        for r in self.rows:
            w.writerow([r.level, fmt(r.beta), fmt(r.aspect), fmt(r.rate)])
        return buf.getvalue()


def rate_table(betas, aspects, pair="sv", strategy=None, levels=None) -> InfSupReport:
    """Tabulate ``rate_k = log(beta_{k-1}/beta_k) / log(aspect_k/aspect_{k-1})``."""
    betas = [float(b) for b in betas]
    aspects = [float(a) for a in aspects]
    if len(betas) != len(aspects) or len(betas) < 2:
        raise ValueError("need two or more (beta, aspect) pairs of equal length")
    if min(betas) <= 0 or min(aspects) <= 0:
        raise ValueError("betas and aspect ratios must be positive")
    levels = list(levels) if levels is not None else list(range(1, len(betas) + 1))
    rows = [InfSupRow(levels[0], betas[0], aspects[0], None)]
    for k in range(1, len(betas)):
        rate = math.log(betas[k - 1] / betas[k]) / math.log(aspects[k] / aspects[k - 1])
        rows.append(InfSupRow(levels[k], betas[k], aspects[k], rate))
    strategy = SplitStrategy.parse(strategy) if strategy is not None else None
    return InfSupReport(rows, Pair.parse(pair), strategy)


def refinement_study(n0: int = 2, strategy="barycenter", levels: int = 4, pair="sv",
                     iterative: bool = False, diagonal="rightup") -> InfSupReport:
    """Repeatedly split the ``n0 x n0`` unit-square mesh and record the
    largest cell aspect ratio and the inf-sup constant after every split."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    strategy = SplitStrategy.parse(strategy)
    pair = Pair.parse(pair)
    per_cell = 3 if pair is Pair.SV_P2P1D else 1
    n_cells = 2 * n0 * n0 * 3 ** levels
    if per_cell * n_cells > MAX_DENSE_PRESSURE_DOFS and not iterative:
        raise InfSupError(f"{per_cell * n_cells} pressure dofs at level {levels} exceed "
                          f"{MAX_DENSE_PRESSURE_DOFS}; request the iterative mode")
    mesh = generate_unit_square_mesh(n0, diagonal)
    betas, aspects = [], []
    for lvl in range(1, levels + 1):
        mesh = clough_tocher_refine(mesh, strategy)
        aspects.append(float(cell_aspect_ratios(mesh.vertices, mesh.cells).max()))
        # dense Schur complements become expensive well before the hard limit
        use_iter = iterative or per_cell * mesh.num_cells > 6000
        betas.append(global_infsup(mesh, pair, iterative=use_iter))
        log.info("level %d: beta=%.5f aspect=%.2f", lvl, betas[-1], aspects[-1])
    if levels == 1:
        return InfSupReport([InfSupRow(1, betas[0], aspects[0], None)], pair, strategy)
    return rate_table(betas, aspects, pair, strategy)
