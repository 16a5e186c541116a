"""Conforming 2D triangular meshes: generation, Clough-Tocher refinement,
validation and a plain-text file format.

Meshes are immutable; every operation returns a new :class:`Mesh2D`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh input or an impossible mesh operation."""


class DegenerateCellError(MeshError):
    """A cell whose area is too small to be split or measured."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class MeshParseError(MeshError):
    """Malformed mesh file. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class SplitStrategy(enum.Enum):
    BARYCENTER = "barycenter"
    INCENTER = "incenter"

    @classmethod
    def parse(cls, value) -> "SplitStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown split strategy {value!r}") from None


class Diagonal(enum.Enum):
    RIGHT_UP = "rightup"    # lower-left to upper-right
    LEFT_UP = "leftup"      # lower-right to upper-left


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Triangular mesh.

    Parameters
    ----------
    vertices : (V, 2) array_like of float
    cells : (C, 3) array_like of int
        Vertex indices, counterclockwise.
    macro_parent : (C,) array_like of int, optional
        Index of the macro triangle each cell was split from.
    """

    vertices: np.ndarray
    cells: np.ndarray
    macro_parent: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = _frozen(self.vertices, float).reshape(-1, 2)
        c = _frozen(self.cells, np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinate")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise MeshError("cell vertex index out of range")
        if np.any((c[:, 0] == c[:, 1]) | (c[:, 1] == c[:, 2]) | (c[:, 0] == c[:, 2])):
            raise MeshError("cell with repeated vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        if self.macro_parent is not None:
            mp = _frozen(self.macro_parent, np.int64).reshape(-1)
            if len(mp) != len(c):
                raise MeshError("macro_parent length does not match cell count")
            object.__setattr__(self, "macro_parent", mp)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def total_area(self) -> float:
        return float(math.fsum(self.areas))

    @cached_property
    def diameter(self) -> float:
        if self.num_vertices == 0:
            return 0.0
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.hypot(*ext))

    @cached_property
    def _edge_data(self):
        c = self.cells
        # local edge k is opposite local vertex k
        pairs = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        pairs = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True)
        cell_edges = inverse.reshape(-1, 3)
        edges.setflags(write=False)
        cell_edges.setflags(write=False)
        counts.setflags(write=False)
        return edges, cell_edges, counts

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) sorted vertex pairs, lexicographic order."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(C, 3) edge ids; local edge k is opposite local vertex k."""
        return self._edge_data[1]

    @property
    def edge_cell_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        mask = self.edge_cell_counts == 1
        mask.setflags(write=False)
        return mask

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Sorted indices of vertices on the boundary."""
        out = np.unique(self.edges[self.boundary_edges])
        out.setflags(write=False)
        return out

    def scaled(self, factor: float) -> "Mesh2D":
        return Mesh2D(self.vertices * factor, self.cells, self.macro_parent)

    def transformed(self, matrix, shift=(0.0, 0.0)) -> "Mesh2D":
        """Apply ``x -> matrix @ x + shift``; orientation is restored if the
        map reverses it."""
        matrix = np.asarray(matrix, float)
        v = self.vertices @ matrix.T + np.asarray(shift, float)
        cells = self.cells
        if np.linalg.det(matrix) < 0:
            cells = cells[:, [0, 2, 1]]
        return Mesh2D(v, cells, self.macro_parent)

    def __eq__(self, other):
        if not isinstance(other, Mesh2D):
            return NotImplemented
        same_mp = (self.macro_parent is None and other.macro_parent is None) or (
            self.macro_parent is not None and other.macro_parent is not None
            and np.array_equal(self.macro_parent, other.macro_parent))
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.cells, other.cells) and same_mp)

    __hash__ = None

    def __repr__(self):
        return (f"Mesh2D(vertices={self.num_vertices}, cells={self.num_cells}, "
                f"macro={'yes' if self.macro_parent is not None else 'no'})")


def generate_unit_square_mesh(n: int, diagonal="rightup") -> Mesh2D:
    """Uniform ``n x n`` grid of the unit square, each square cut in two."""
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    return _tensor_mesh(t, t, Diagonal(str(getattr(diagonal, "value", diagonal)).lower()))


def generate_shishkin_mesh(N: int, tau: float, diagonal="rightup") -> Mesh2D:
    """Piecewise-uniform layer mesh refined towards ``x = 0``.

    Half of the ``N`` columns cover ``[0, tau]``, the other half
    ``[tau, 1]``; rows are uniform. Produces ``2 N**2`` cells.
    """
    if int(N) != N or N < 2 or N % 2:
        raise MeshError(f"N must be an even integer >= 2, got {N!r}")
    if not 0.0 < tau < 1.0:
        raise MeshError(f"tau must lie in (0, 1), got {tau!r}")
    N = int(N)
    i = np.arange(N + 1)
    half = N // 2
    x = np.where(i <= half, i * 2.0 * tau / N,
                 tau + (i - half) * 2.0 * (1.0 - tau) / N)
    x[-1] = 1.0
    y = i / N
    return _tensor_mesh(x, y, Diagonal(str(getattr(diagonal, "value", diagonal)).lower()))


def shishkin_aspect_ratio(tau: float) -> float:
    """Closed-form aspect ratio of the thin layer cells of the Shishkin mesh."""
    s = math.sqrt(1.0 + 4.0 * tau * tau)
    return s / (1.0 + 2.0 * tau - s)


def _tensor_mesh(x, y, diagonal: Diagonal) -> Mesh2D:
    nx, ny = len(x) - 1, len(y) - 1
    X, Y = np.meshgrid(x, y, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (jj * (nx + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    if diagonal is Diagonal.RIGHT_UP:
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh2D(vertices, cells)


def split_points(mesh: Mesh2D, strategy) -> np.ndarray:
    """Split point of every cell, shape (C, 2)."""
    strategy = SplitStrategy.parse(strategy)
    p = mesh.vertices[mesh.cells]
    d = p[:, 1:] - p[:, :1]     # offsets from the first vertex limit cancellation
    if strategy is SplitStrategy.BARYCENTER:
        return p[:, 0] + d.sum(axis=1) / 3.0
    # weight of vertex k is the length of the opposite edge
    opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    w = np.hypot(opp[..., 0], opp[..., 1])
    return p[:, 0] + (w[:, 1:, None] * d).sum(axis=1) / w.sum(axis=1)[:, None]


def clough_tocher_refine(mesh: Mesh2D, strategy) -> Mesh2D:
    """Split every cell into three at its barycenter or incenter.

    Child ``3*c + k`` of cell ``c`` shares the parent's local edge ``k``
    (the edge opposite local vertex ``k``); the new vertex of cell ``c`` gets
    index ``V + c``.
    """
    areas = mesh.signed_areas
    tol = 1e-14 * mesh.diameter ** 2
    bad = np.flatnonzero(areas <= tol)
    if len(bad):
        c = int(bad[0])
        raise DegenerateCellError(
            f"cell {c} has area {areas[c]:.3e} below tolerance {tol:.3e}; "
            "refusing to split", cell=c)
    z0 = split_points(mesh, strategy)
    V = mesh.num_vertices
    C = mesh.num_cells
    s = V + np.arange(C)
    a, b, d = mesh.cells.T
    children = np.stack([
        np.column_stack([b, d, s]),
        np.column_stack([d, a, s]),
        np.column_stack([a, b, s]),
    ], axis=1).reshape(-1, 3)
    return Mesh2D(np.vstack([mesh.vertices, z0]), children, np.repeat(np.arange(C), 3))


@dataclass
class ValidationReport:
    conforming: bool
    oriented: bool
    duplicate_vertices: list
    total_area: float
    overshared_edges: list = field(default_factory=list)
    flipped_cells: list = field(default_factory=list)
    unused_vertices: list = field(default_factory=list)
    macro_ok: bool | None = None

    @property
    def valid(self) -> bool:
        return (self.conforming and self.oriented and not self.duplicate_vertices
                and self.macro_ok is not False)

    def failures(self) -> list[str]:
        out = []
        if not self.conforming:
            out.append(f"non-conforming edges {self.overshared_edges[:5]}")
        if not self.oriented:
            out.append(f"non-positive cells {self.flipped_cells[:5]}")
        if self.duplicate_vertices:
            out.append(f"duplicate vertices {self.duplicate_vertices[:5]}")
        if self.macro_ok is False:
            out.append("macro_parent groups are not triples")
        return out


def validate_mesh(mesh: Mesh2D) -> ValidationReport:
    """Check conformity, orientation, duplicate vertices and macro groups.

    An edge shared by more than two cells, or an interior (twice-shared)
    edge that both neighbours traverse in the same direction, counts as a
    conformity failure. Hanging nodes show up as boundary edges in the
    interior and are not detected here.
    """
    c = mesh.cells
    counts = mesh.edge_cell_counts
    over = np.flatnonzero(counts > 2).tolist()
    # directed-edge duplicates signal inconsistent neighbours
    directed = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1).reshape(-1, 2)
    _, dcount = np.unique(directed, axis=0, return_counts=True)
    conforming = not over and not np.any(dcount > 1)

    flipped = np.flatnonzero(mesh.signed_areas <= 0).tolist()

    dups = []
    tol = 1e-12 * max(mesh.diameter, np.finfo(float).tiny)
    if mesh.num_vertices > 1:
        from scipy.spatial import cKDTree

        dups = sorted(tuple(sorted(p)) for p in cKDTree(mesh.vertices).query_pairs(tol))
    used = np.zeros(mesh.num_vertices, bool)
    used[c.ravel()] = True

    macro_ok = None
    if mesh.macro_parent is not None:
        _, mc = np.unique(mesh.macro_parent, return_counts=True)
        macro_ok = bool(np.all(mc == 3))
    return ValidationReport(
        conforming=bool(conforming), oriented=not flipped, duplicate_vertices=dups,
        total_area=mesh.total_area, overshared_edges=over, flipped_cells=flipped,
        unused_vertices=np.flatnonzero(~used).tolist(), macro_ok=macro_ok)


MAGIC = "svmesh v1"


def format_mesh(mesh: Mesh2D) -> str:
    """Serialise to the ``svmesh v1`` text format (round-trip precision)."""
    lines = [MAGIC, f"vertices {mesh.num_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"cells {mesh.num_cells}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    if mesh.macro_parent is not None:
        lines.append(f"macro_parents {mesh.num_cells}")
        lines += [str(m) for m in mesh.macro_parent.tolist()]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: Mesh2D, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def read_mesh(path) -> Mesh2D:
    with open(path) as fh:
        return parse_mesh(fh.read())


def parse_mesh(text: str) -> Mesh2D:
    lines = text.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            return None, len(lines) + 1
        pos += 1
        return lines[pos - 1].strip(), pos

    def section(name, required=True):
        line, no = next_line()
        if line is None:
            if required:
                raise MeshParseError(f"expected '{name} <count>', got end of file", no)
            return None, no
        parts = line.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshParseError(f"expected '{name} <count>', got {line!r}", no)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshParseError(f"bad count {parts[1]!r}", no) from None
        if count < 0:
            raise MeshParseError(f"negative count {count}", no)
        return count, no

    def rows(count, width, conv, what):
        out = []
        for _ in range(count):
            line, no = next_line()
            if line is None:
                raise MeshParseError(
                    f"truncated {what} block: expected {count} lines, found {len(out)}", no)
            parts = line.split()
            if len(parts) != width:
                raise MeshParseError(f"expected {width} values in {what} line, got {line!r}", no)
            try:
                vals = [conv(p) for p in parts]
            except ValueError:
                raise MeshParseError(f"cannot parse {what} line {line!r}", no) from None
            out.append((vals, no))
        return out

    line, no = next_line()
    if line != MAGIC:
        raise MeshParseError(f"bad header {line!r}, expected {MAGIC!r}", no)
    nv, _ = section("vertices")
    vrows = rows(nv, 2, float, "vertex")
    for vals, no in vrows:
        if not all(math.isfinite(v) for v in vals):
            raise MeshParseError("non-finite coordinate", no)
    nc, _ = section("cells")
    crows = rows(nc, 3, int, "cell")
    for vals, no in crows:
        for i in vals:
            if not 0 <= i < nv:
                raise MeshParseError(f"vertex index {i} out of range for {nv} vertices", no)
        if len(set(vals)) != 3:
            raise MeshParseError("cell repeats a vertex index", no)
    macro = None
    nm, no = section("macro_parents", required=False)
    if nm is not None:
        if nm != nc:
            raise MeshParseError(f"macro_parents count {nm} differs from cell count {nc}", no)
        macro = [vals[0] for vals, _ in rows(nm, 1, int, "macro_parents")]
    line, no = next_line()
    if line is not None:
        raise MeshParseError(f"unexpected trailing content {line!r}", no)
    return Mesh2D(np.array([v for v, _ in vrows], float).reshape(-1, 2),
                  np.array([v for v, _ in crows], np.int64).reshape(-1, 3), macro)
