"""
Stokes flow with a boundary layer
=================================

The exact velocity has an exponential layer of width ``eps`` at ``x = 0``.
A Shishkin mesh resolves the layer with thin cells; one Clough-Tocher
split then makes the Scott-Vogelius pair stable. The discrete velocity
is divergence free to rounding error for both split points.
"""

import math

from svlab.mesh import clough_tocher_refine, generate_shishkin_mesh, generate_unit_square_mesh
from svlab.stokes import ManufacturedSolution, default_tau, solve_stokes

eps = 0.01
tau = default_tau(eps)            # 3 eps |log10 eps| = 0.06
exact = ManufacturedSolution(eps)
print(f"eps={eps}, tau={tau:.3f}")

for N in (8, 16):
    parent = generate_shishkin_mesh(N, tau)
    for strategy in ("barycenter", "incenter"):
        r = solve_stokes(clough_tocher_refine(parent, strategy), exact).report
        print(f"N={N:<3} {strategy:>10}: |u-uh|_0={r.l2_vel:.3e} |u-uh|_1={r.h1_vel:.3e} "
              f"|p-ph|_0={r.l2_prs:.3e} max|div uh|={r.linf_div:.1e} aspect={r.max_aspect:.2f}")

# %%
# Smooth regime
# -------------
# With ``eps = 1`` the solution is smooth and the errors drop at the
# optimal rates on uniform meshes.

smooth = ManufacturedSolution(1.0)
prev = None
for n in (4, 8, 16):
    r = solve_stokes(clough_tocher_refine(generate_unit_square_mesh(n), "barycenter"), smooth).report
    if prev is not None:
        print(f"n={n:<3} orders: L2 velocity {math.log2(prev.l2_vel / r.l2_vel):.2f}, "
              f"H1 velocity {math.log2(prev.h1_vel / r.h1_vel):.2f}, "
              f"L2 pressure {math.log2(prev.l2_prs / r.l2_prs):.2f}")
    prev = r
