"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that the terminal summary prints at the end of the run."""
import itertools
import math
import time
import warnings

import numpy as np
import pytest

from conftest import aspect_family_triangle, hat_seminorm_fe, random_triangles
from svlab.geometry import (analyze_triangle, cell_aspect_ratios, hat_seminorm_sq,
                            incenter_children_keep_lac, lemma_bounds_report, split_point)
from svlab.infsup import global_infsup, local_infsup, rate_table, refinement_study
from svlab.mesh import (clough_tocher_refine, generate_shishkin_mesh, generate_unit_square_mesh,
                        shishkin_aspect_ratio)
from svlab.stokes import ManufacturedSolution, compare_strategies, solve_stokes

STRATEGIES = ("barycenter", "incenter")

# published (beta, aspect, rate) columns of the two refinement tables
BARY_TABLE = ([.26301, .18898, .06402, .02137, .00713, .00238],
              [12.32, 36.11, 108.03, 324.01, 972.00, 2916.00],
              [.30749, .98777, .99862, .99985, .99998])
INC_TABLE = ([.27880, .27590, .13861, .06939, .03471, .01735],
             [10.05, 20.30, 40.71, 81.47, 162.96, 325.94],
             [.01493, .98959, .99739, .99934, .99984])


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


# --- 1 ---------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="printed beta values carry 3-5 significant digits; "
                   "their rounding moves deep-level rates by up to 2.6e-3")
def test_c01_rate_arithmetic(record):
    worst, elapsed = 0.0, 0.0
    for betas, aspects, rates in (BARY_TABLE, INC_TABLE):
        rep, dt = _timed(rate_table, betas, aspects)
        elapsed = max(elapsed, dt)
        worst = max(worst, max(abs(a - b) for a, b in zip(rep.rates[1:], rates)))
    ok = worst <= 1e-4 and elapsed < 1e-3
    record("C1 rate arithmetic (printed pairs)", ok,
           f"max |rate diff| {worst:.2e} > 1e-4 from rounding of the printed betas, "
           f"{elapsed * 1e3:.3f} ms")
    assert ok


def _rate_interval(b0, b1, a0, a1, db=1e-5, da=1e-2):
    """Range of the rate over all (beta, aspect) consistent with the printed
    digits (rounded or truncated)."""
    lo = math.log((b0 - db) / (b1 + db)) / math.log((a1 + da) / (a0 - da))
    hi = math.log((b0 + db) / (b1 - db)) / math.log((a1 - da) / (a0 + da))
    return lo, hi


@pytest.fixture(scope="module")
def six_levels():
    return {s: _timed(refinement_study, 2, s, 6, iterative=True) for s in STRATEGIES}


def test_c01_rate_arithmetic_full_precision(record, six_levels):
    worst_rate, worst_beta, worst_aspect, elapsed = 0.0, 0.0, 0.0, 0.0
    inside = True
    for s, (betas, aspects, rates) in zip(STRATEGIES, (BARY_TABLE, INC_TABLE)):
        study, _ = six_levels[s]
        rep, dt = _timed(rate_table, study.betas, study.aspects)
        elapsed = max(elapsed, dt)
        worst_rate = max(worst_rate, max(abs(a - b) for a, b in zip(rep.rates[1:], rates)))
        worst_beta = max(worst_beta, max(abs(a - b) for a, b in zip(study.betas, betas)))
        # the tables list h_T over the inradius, twice the aspect ratio used here
        worst_aspect = max(worst_aspect,
                           max(abs(2 * a - b) for a, b in zip(study.aspects, aspects)))
        for k in range(1, 6):
            lo, hi = _rate_interval(betas[k - 1], betas[k], aspects[k - 1], aspects[k])
            inside &= lo <= rates[k - 1] <= hi
    ok = worst_rate <= 1e-4 and elapsed < 1e-3 and inside
    record("C1 rate arithmetic (full precision)", ok,
           f"six-level rates vs printed: max diff {worst_rate:.1e}; betas within "
           f"{worst_beta:.1e}, 2*aspect within {worst_aspect:.3f}; printed rates inside "
           f"rounding intervals: {inside}; {elapsed * 1e3:.3f} ms")
    assert worst_beta <= 1.5e-5 and worst_aspect <= 1e-2
    assert ok


# --- 2 ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def thousand_triangles():
    return random_triangles(1000, seed=2024)


def test_c02_geometric_lemmas(record, thousand_triangles):
    t0 = time.perf_counter()
    violations = {}
    rhos = []
    for p in thousand_triangles:
        rep = lemma_bounds_report(*p)
        rhos.append(rep.aspect)
        for name, good in rep.checks.items():
            if not good:
                violations[name] = violations.get(name, 0) + 1
        # largest delta for which the parent satisfies LAC(delta)
        delta = 0.999 * (math.pi - analyze_triangle(*p).alpha_max)
        if not incenter_children_keep_lac(*p, delta):
            violations["lac_inc"] = violations.get("lac_inc", 0) + 1
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 5.0
    record("C2 geometric lemmas", ok,
           f"{len(rhos)} triangles, aspect {min(rhos):.3g}..{max(rhos):.3g}, "
           f"violations {violations or 0}, {elapsed:.2f} s")
    assert 2.0 <= min(rhos) and max(rhos) <= 1e4 * (1 + 1e-9)
    assert ok


# --- 3 ---------------------------------------------------------------------

def test_c03_split_points_of_figure(record):
    tri = [(0, 0), (1, 0), (0, 3)]
    inc = split_point(*tri, "incenter")
    bary = split_point(*tri, "barycenter")
    e_inc = np.abs(inc - 0.41886117).max()
    e_bary = np.abs(bary - [1 / 3, 1.0]).max()
    ok = e_inc <= 1e-7 and e_bary <= 1e-14
    record("C3 split points", ok, f"incenter err {e_inc:.1e}, barycenter err {e_bary:.1e}")
    assert ok


# --- 4 ---------------------------------------------------------------------

def test_c04_hat_seminorm(record):
    tris = random_triangles(100, seed=7)
    t0 = time.perf_counter()
    worst, bound_ok = 0.0, True
    for p in tris:
        for s in STRATEGIES:
            formula = hat_seminorm_sq(*p, s)
            worst = max(worst, abs(formula - hat_seminorm_fe(p, s)) / formula)
        bound_ok &= hat_seminorm_sq(*p, "incenter") <= 4.0 * analyze_triangle(*p).aspect
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and bound_ok and elapsed < 2.0
    record("C4 hat seminorm", ok,
           f"max rel diff {worst:.1e}, incenter <= 4 aspect: {bound_ok}, {elapsed:.2f} s")
    assert ok


# --- 5, 6 ------------------------------------------------------------------

@pytest.fixture(scope="module")
def studies():
    return {s: _timed(refinement_study, 2, s, 4) for s in STRATEGIES}


def test_c05_aspect_growth(record, studies):
    bands = {"barycenter": (2.8, 3.0), "incenter": (1.9, 2.1)}
    ok, parts = True, []
    for s, (rep, dt) in studies.items():
        a = rep.aspects
        ratios = [a[k + 1] / a[k] for k in range(len(a) - 1)]
        lo, hi = bands[s]
        ok &= all(lo <= r <= hi for r in ratios) and dt < 60.0
        parts.append(f"{s} " + "/".join(f"{r:.3f}" for r in ratios) + f" ({dt:.1f} s)")
    record("C5 aspect growth", ok, "; ".join(parts))
    assert ok


def test_c06_infsup_scaling(record, studies):
    bary, t_b = studies["barycenter"]
    inc, t_i = studies["incenter"]
    rates = {"barycenter": bary.rates[3], "incenter": inc.rates[3]}
    larger = all(bi > bb for bi, bb in zip(inc.betas, bary.betas))
    ok = all(0.9 <= r <= 1.1 for r in rates.values()) and larger and t_b + t_i < 600
    record("C6 inf-sup scaling", ok,
           f"rate 3->4 bary {rates['barycenter']:.5f}, inc {rates['incenter']:.5f}; "
           f"beta_inc > beta_bary at all levels: {larger}")
    assert ok


# --- 7 ---------------------------------------------------------------------

def test_c07_local_stability(record):
    targets = [4, 8, 16, 32, 64]
    # right triangles (0,0), (1,0), (0,t): largest angle stays at pi/2
    family = []
    for r in targets:
        tri = aspect_family_triangle(r, 0.0)
        family.append(tri)
        assert analyze_triangle(*tri).aspect == pytest.approx(r, rel=1e-10)
    t0 = time.perf_counter()
    ok, parts = True, []
    for s in STRATEGIES:
        res = [local_infsup(*tri, s) for tri in family]
        scaled = [r.beta_local * r.aspect for r in res]
        band = max(scaled) / min(scaled)
        full = all(r.divergence_rank == r.interior_dof_count for r in res)
        ok &= band <= 10 and full
        parts.append(f"{s} beta*aspect {min(scaled):.3f}..{max(scaled):.3f} "
                     f"(ratio {band:.2f}), G nonsingular: {full}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    record("C7 local stability", ok, "; ".join(parts) + f"; {elapsed:.2f} s")
    assert ok


# --- 8 ---------------------------------------------------------------------

def test_c08_p2p0_uniformity(record):
    taus = [0.24, 0.12, 0.06, 0.03]
    t0 = time.perf_counter()
    betas, aspects = [], []
    for tau in taus:
        mesh = generate_shishkin_mesh(8, tau)
        betas.append(global_infsup(mesh, "p2p0"))
        aspects.append(float(cell_aspect_ratios(mesh.vertices, mesh.cells).max()))
    elapsed = time.perf_counter() - t0
    spread = max(betas) / min(betas)
    growth = aspects[-1] / aspects[0]
    expected = shishkin_aspect_ratio(taus[-1]) / shishkin_aspect_ratio(taus[0])
    # the aspect ratio behaves like 1/(2 tau) only asymptotically, so an 8x
    # drop in tau yields the closed-form growth below rather than a full 8x
    ok = spread < 2.0 and math.isclose(growth, expected, rel_tol=1e-9) and elapsed < 120
    record("C8 P2-P0 uniformity", ok,
           f"beta {min(betas):.4f}..{max(betas):.4f} (ratio {spread:.3f}), aspect growth "
           f"{growth:.2f}x (closed form {expected:.2f}x, asymptotic 8x), {elapsed:.1f} s")
    assert ok


# --- 9, 10 -----------------------------------------------------------------

@pytest.fixture(scope="module")
def smooth_solves():
    sol = ManufacturedSolution(epsilon=1.0)
    out = {}
    for s in STRATEGIES:
        for n in (16, 32):
            mesh = clough_tocher_refine(generate_unit_square_mesh(n), s)
            out[s, n] = _timed(solve_stokes, mesh, sol)
    return out


@pytest.fixture(scope="module")
def layer_rows():
    rows, dt = _timed(compare_strategies, [8, 16, 32], 0.01)
    return rows, dt


def test_c09_divergence_free(record, smooth_solves, layer_rows):
    rows, _ = layer_rows
    ratios = [r.report.linf_div / r.report.h1_uh for r, _ in smooth_solves.values()]
    ratios += [r["linf_div"] / r["h1_uh"] for r in rows]
    worst_time = max(dt for (_, n), (_, dt) in smooth_solves.items() if n == 32)
    ok = max(ratios) <= 1e-9 and worst_time < 30.0
    record("C9 divergence free", ok,
           f"{len(ratios)} solves, max linf_div/|u_h|_1 {max(ratios):.1e}, "
           f"slowest N=32 solve {worst_time:.1f} s")
    assert ok


def test_c10_convergence(record, smooth_solves, layer_rows):
    ok, parts = True, []
    for s in STRATEGIES:
        coarse, fine = smooth_solves[s, 16][0].report, smooth_solves[s, 32][0].report
        order = {k: math.log2(getattr(coarse, k) / getattr(fine, k))
                 for k in ("l2_vel", "h1_vel", "l2_prs")}
        ok &= order["l2_vel"] >= 2.7 and order["h1_vel"] >= 1.7 and order["l2_prs"] >= 1.7
        parts.append(f"{s} orders L2u {order['l2_vel']:.2f} H1u {order['h1_vel']:.2f} "
                     f"L2p {order['l2_prs']:.2f}")
    rows, dt_layer = layer_rows
    by = {(r["N"], r["strategy"]): r for r in rows}
    within = []
    for N in (8, 16, 32):
        b, i = by[N, "barycenter"], by[N, "incenter"]
        for k in ("l2_vel", "h1_vel"):
            within.append(max(b[k], i[k]) / min(b[k], i[k]))
    ok &= max(within) <= 2.0
    for s in STRATEGIES:
        errs = [by[N, s]["h1_vel"] for N in (8, 16, 32)]
        ok &= errs[0] > errs[1] > errs[2]
    if any(by[N, "incenter"]["l2_prs"] > by[N, "barycenter"]["l2_prs"] for N in (8, 16, 32)):
        warnings.warn("incenter pressure error exceeds barycenter on the layer mesh")
    total = dt_layer + sum(dt for _, dt in smooth_solves.values())
    ok &= total < 600
    parts.append(f"layer velocity error ratio <= {max(within):.2f}; total {total:.0f} s")
    record("C10 convergence", ok, "; ".join(parts))
    assert ok


# --- 11 --------------------------------------------------------------------

def test_c11_shishkin_consistency(record):
    combos = list(itertools.product([2, 4, 8, 16], [0.01, 0.03, 0.06, 0.12, 0.24]))
    t0 = time.perf_counter()
    worst = 0.0
    for N, tau in combos:
        m = generate_shishkin_mesh(N, tau)
        measured = cell_aspect_ratios(m.vertices, m.cells).max()
        worst = max(worst, abs(measured / shishkin_aspect_ratio(tau) - 1))
    elapsed = time.perf_counter() - t0
    rho = shishkin_aspect_ratio(0.06)
    ok = len(combos) == 20 and worst <= 1e-9 and round(rho, 2) == 8.93 and elapsed < 1.0
    record("C11 Shishkin consistency", ok,
           f"{len(combos)} combos, max rel err {worst:.1e}, rho(0.06) = {rho:.4f}, "
           f"{elapsed * 1e3:.0f} ms")
    assert ok
