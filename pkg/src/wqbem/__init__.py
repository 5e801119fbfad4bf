"""Galerkin boundary elements for the 2D Laplace equation on B-spline
boundaries, assembled with weighted quadrature and sum factorization."""

from .errors import (
    ConstructionError,
    DomainError,
    GeometryError,
    MetricError,
    SolverError,
    UsageError,
    WqbemError,
)
from .splines import (
    BasisSpec,
    RefinedBasis,
    make_cyclic_basis,
    make_open_basis,
    refine_uniform,
)
from .geometry import BoundaryCurve, KernelSplit, curve_eval, load_curve, parametric_speed
from .quadrature import (
    NodeVector,
    WeightedRule,
    build_nodes,
    build_regular_rules,
    build_singular_rules,
    modified_moments,
    quad_error_ERR,
)

__version__ = "0.1.0"
