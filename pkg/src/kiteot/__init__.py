"""Semi-discrete optimal transport on the kite and the analysis of its Brenier potential.

Modules
-------
geometry, domains
    Convex polygons (exact or float), the source kite and target quads, symmetry maps.
simplex_charts
    Exact singular affine charts on the simplex boundary and the discrete c-transform.
ot_semidiscrete
    Damped Newton solver for the semi-discrete transport problem.
ot_oracle
    Exact LP and Sinkhorn oracles for small discrete instances.
potential_analysis
    Potential evaluation, local Hessian regression, symmetry and Monge-Ampere checks.
conformal
    Isothermal coordinates, harmonicity, logarithmic asymptotics and blow-up checks.
"""

from .geometry import ConvexPolygon, HalfPlane, PiecewiseLinearMap, apply_map, clip_halfplane, contains, polygon_area
from .ot_semidiscrete import SemiDiscretePlan, TargetDiscretization, discretize_target, laguerre_cells, solve
from .potential_analysis import PotentialField

__version__ = "0.1.0"

__all__ = [
    "ConvexPolygon",
    "HalfPlane",
    "PiecewiseLinearMap",
    "PotentialField",
    "SemiDiscretePlan",
    "TargetDiscretization",
    "apply_map",
    "clip_halfplane",
    "contains",
    "discretize_target",
    "laguerre_cells",
    "polygon_area",
    "solve",
]
