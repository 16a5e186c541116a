"""Command-line front end.

Every subcommand writes CSV (or a mesh file) to ``--out`` or stdout and a
one-line ``# svlab ...`` parameter header to stderr. Exit status is 0 on
success, 1 on a domain error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

from . import __version__, fem
from .geometry import analyze_triangle, check_lac
from .infsup import InfSupError, local_infsup, refinement_study
from .mesh import (MeshError, clough_tocher_refine, format_mesh, generate_shishkin_mesh,
                   generate_unit_square_mesh, parse_mesh, read_mesh)
from .quadrature import ERROR_RULE_DEGREE
from .stokes import (COMPARISON_FIELDS, ManufacturedSolution, StokesError, compare_strategies,
                     default_tau, rows_to_csv, solve_stokes)

DOMAIN_ERRORS = (MeshError, InfSupError, StokesError, OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_mesh(path):
    if path in (None, "-"):
        return parse_mesh(sys.stdin.read())
    return read_mesh(path)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _int_list(s):
    try:
        return [_pos_int(t) for t in s.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


# --- subcommands -----------------------------------------------------------

def cmd_generate(a):
    if a.shishkin is not None:
        tau = a.tau if a.tau is not None else default_tau(a.eps, a.log_base)
        mesh = generate_shishkin_mesh(a.shishkin, tau, a.diagonal)
    else:
        mesh = generate_unit_square_mesh(a.unit_square, a.diagonal)
    _emit(format_mesh(mesh), a.out)


def cmd_refine(a):
    mesh = _load_mesh(a.input)
    for _ in range(a.levels):
        mesh = clough_tocher_refine(mesh, a.strategy)
    _emit(format_mesh(mesh), a.out)


def cmd_quality(a):
    mesh = _load_mesh(a.input)
    rows, aspects, amin, amax, all_pass = [], [], math.inf, 0.0, True
    for c, tri in enumerate(mesh.cells):
        try:
            m = analyze_triangle(*mesh.vertices[tri])
        except MeshError:
            raise MeshError(f"cell {c} is degenerate") from None
        ok = check_lac(m, a.delta)
        all_pass &= ok
        amin, amax = min(amin, m.alpha_min), max(amax, m.alpha_max)
        aspects.append(m.aspect)
        rows.append([c, *m.h, m.alpha_max, m.aspect, int(ok), m.alpha_min])
    rows.append(["summary", "", "", "", amax, max(aspects, default=math.nan), int(all_pass), amin])
    _emit(_csv(["cell_id", "h1", "h2", "h3", "alpha_max", "aspect", "lac_pass", "alpha_min"],
               rows), a.out)


def cmd_infsup(a):
    rep = refinement_study(a.n0, a.strategy, a.levels, a.pair, iterative=a.iterative,
                           diagonal=a.diagonal)
    _emit(rep.to_csv(), a.out)


def cmd_infsup_local(a):
    r = local_infsup(a.coords[0:2], a.coords[2:4], a.coords[4:6], a.strategy)
    _emit(_csv(["beta_local", "aspect"], [[r.beta_local, r.aspect]]), a.out)


def _stokes_mesh(a):
    if a.mesh is not None:
        mesh = _load_mesh(a.mesh)
    else:
        tau = a.tau if a.tau is not None else default_tau(a.eps, a.log_base)
        mesh = generate_shishkin_mesh(a.N, tau)
    if a.strategy != "none":
        mesh = clough_tocher_refine(mesh, a.strategy)
    return mesh


def cmd_stokes(a):
    mesh = _stokes_mesh(a)
    mats = {} if a.dump_matrices else None
    res = solve_stokes(mesh, ManufacturedSolution(a.eps, a.nu), quad_degree=a.quad_degree,
                       matrices_out=mats)
    if mats is not None:
        d = Path(a.dump_matrices)
        d.mkdir(parents=True, exist_ok=True)
        for name, A in mats.items():
            fem.write_triplets(A, d / f"{name}.txt")
    row = res.report.as_row()
    _emit(_csv(list(row), [list(row.values())]), a.out)


def cmd_convergence(a):
    strategies = ("barycenter", "incenter") if a.strategies == "both" else (a.strategies,)
    tau = a.tau if a.tau is not None else default_tau(a.eps, a.log_base)
    rows = compare_strategies(a.N_list, a.eps, tau, a.nu, strategies)
    _emit(rows_to_csv(rows, COMPARISON_FIELDS), a.out)


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="svlab", description="Scott-Vogelius experiments on Clough-Tocher meshes")
    p.add_argument("--version", action="version", version=f"svlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    strat = dict(choices=["barycenter", "incenter"], default="barycenter")

    g = sub.add_parser("generate", help="write a unit-square or Shishkin mesh")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--unit-square", type=_pos_int, metavar="N")
    src.add_argument("--shishkin", type=_pos_int, metavar="N")
    g.add_argument("--tau", type=float)
    g.add_argument("--eps", type=float, default=0.01)
    g.add_argument("--log-base", type=float, default=10.0)
    g.add_argument("--diagonal", choices=["rightup", "leftup"], default="rightup")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("refine", help="Clough-Tocher split a mesh file")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--strategy", **strat)
    r.add_argument("--levels", type=_pos_int, default=1)
    r.add_argument("--out")
    r.set_defaults(func=cmd_refine)

    q = sub.add_parser("quality", help="per-cell quality CSV")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--delta", type=float, default=0.1, help="large angle condition margin")
    q.add_argument("--out")
    q.set_defaults(func=cmd_quality)

    i = sub.add_parser("infsup", help="inf-sup constants under repeated refinement")
    i.add_argument("--strategy", **strat)
    i.add_argument("--levels", type=_pos_int, default=4)
    i.add_argument("--pair", choices=["sv", "p2p0"], default="sv")
    i.add_argument("--n0", type=_pos_int, default=2)
    i.add_argument("--diagonal", choices=["rightup", "leftup"], default="rightup")
    i.add_argument("--iterative", action="store_true")
    i.add_argument("--out")
    i.set_defaults(func=cmd_infsup)

    lo = sub.add_parser("infsup-local", help="macro-element inf-sup constant of one triangle")
    lo.add_argument("coords", type=float, nargs=6, metavar="X")
    lo.add_argument("--strategy", **strat)
    lo.add_argument("--out")
    lo.set_defaults(func=cmd_infsup_local)

    s = sub.add_parser("stokes", help="one boundary-layer Stokes solve")
    msrc = s.add_mutually_exclusive_group()
    msrc.add_argument("--N", type=_pos_int, default=8)
    msrc.add_argument("--mesh")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--tau", type=float)
    s.add_argument("--log-base", type=float, default=10.0)
    s.add_argument("--nu", type=float, default=1.0)
    s.add_argument("--strategy", choices=["barycenter", "incenter", "none"], default="incenter")
    s.add_argument("--quad-degree", type=_pos_int, default=ERROR_RULE_DEGREE)
    s.add_argument("--dump-matrices", metavar="DIR")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stokes)

    c = sub.add_parser("convergence", help="strategy comparison on Shishkin meshes")
    c.add_argument("--N-list", type=_int_list, default=[8, 16, 32])
    c.add_argument("--eps", type=float, default=0.01)
    c.add_argument("--tau", type=float)
    c.add_argument("--log-base", type=float, default=10.0)
    c.add_argument("--nu", type=float, default=1.0)
    c.add_argument("--strategies", choices=["both", "barycenter", "incenter"], default="both")
    c.add_argument("--out")
    c.set_defaults(func=cmd_convergence)
    return p


def _header(a) -> str:
    params = {k: v for k, v in sorted(vars(a).items()) if k not in ("func",)}
    return f"# svlab {__version__} " + " ".join(f"{k}={v}" for k, v in params.items())


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:   # --help / --version
        return int(exc.code or 0)
    if a.command == "stokes" and a.mesh is not None and a.tau is not None:
        print("usage error: --tau only applies to generated meshes", file=sys.stderr)
        return 2
    print(_header(a), file=sys.stderr)
    try:
        a.func(a)
    except DOMAIN_ERRORS as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
