"""
Barycenter versus incenter splits
=================================

Splitting a triangle at its barycenter or at its incenter gives three
children whose shape depends strongly on the choice. This script walks
through one thin triangle and then through repeated refinement of the
unit square.
"""

import numpy as np

from svlab.geometry import (analyze_triangle, cell_aspect_ratios, lemma_bounds_report,
                            split_metrics, split_point)
from svlab.mesh import clough_tocher_refine, generate_unit_square_mesh, validate_mesh

# a right triangle with legs 1 and 3
tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 3.0)]
m = analyze_triangle(*tri)
print(f"parent: edges {np.round(m.h, 4)}, aspect {m.aspect:.4f}")

for strategy in ("barycenter", "incenter"):
    z0 = split_point(*tri, strategy)
    s = split_metrics(*tri, strategy)
    print(f"{strategy:>10}: split point {np.round(z0, 8)}, "
          f"worst child aspect {s.aspect:.4f}, largest child angle "
          f"{np.degrees(s.max_child_angle):.1f} deg")

# the child aspect ratios obey two-sided bounds in terms of the parent
rep = lemma_bounds_report(*tri)
print(f"incenter child aspect {rep.inc_aspect:.3f} in "
      f"[{rep.inc_bounds[0]:.3f}, {rep.inc_bounds[1]:.3f}]")
print(f"barycenter child aspect {rep.bary_aspect:.3f} in "
      f"[{rep.bary_bounds[0]:.3f}, {rep.bary_bounds[1]:.3f}]")

# %%
# Repeated refinement
# -------------------
# Barycenter refinement multiplies the worst aspect ratio by about three
# per level, incenter refinement by about two.

for strategy in ("barycenter", "incenter"):
    mesh = generate_unit_square_mesh(2)
    worst = []
    for _ in range(4):
        mesh = clough_tocher_refine(mesh, strategy)
        assert validate_mesh(mesh).valid
        worst.append(cell_aspect_ratios(mesh.vertices, mesh.cells).max())
    ratios = np.array(worst[1:]) / worst[:-1]
    print(f"{strategy:>10}: aspect {np.round(worst, 3)}  growth {np.round(ratios, 3)}")
