"""Scott-Vogelius elements on anisotropic Clough-Tocher meshes."""

__version__ = "0.1.0"

from .mesh import (  # noqa: E402
    Diagonal, Mesh2D, MeshError, SplitStrategy, clough_tocher_refine, generate_shishkin_mesh,
    generate_unit_square_mesh, read_mesh, validate_mesh, write_mesh,
)
from .geometry import (  # noqa: E402
    analyze_triangle, check_lac, hat_seminorm_sq, lemma_bounds_report, reference_map,
    split_metrics, split_point,
)
from .infsup import (  # noqa: E402
    Pair, compose_beta, global_infsup, local_infsup, rate_table, refinement_study,
)
from .stokes import ManufacturedSolution, compare_strategies, exact_solution, solve_stokes  # noqa: E402
