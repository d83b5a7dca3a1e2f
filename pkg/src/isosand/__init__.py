"""isosand: leaky abelian sandpiles and killed-random-walk limit shapes on
isoradial graphs with elliptic weights."""

__version__ = "0.1.0"

from .elliptic import ElliptParams, complete_integrals
from .green import GreenField, solve_potential, truncation_radius
from .isograph import (
    IsoradialGraph,
    SurfaceLift,
    build_multigrid_tiling,
    build_square_lattice,
    lift_coordinates,
    project,
)
from .limitshape import DirectionProfile, ShapeCurve, direction_profile, predicted_radius
from .sandpile import SandpileState, shape, stabilize, stabilize_parallel
from .weights import ModelBounds, WeightedGraph, attach_weights, compute_model_bounds

__all__ = [
    "ElliptParams",
    "complete_integrals",
    "IsoradialGraph",
    "SurfaceLift",
    "build_square_lattice",
    "build_multigrid_tiling",
    "lift_coordinates",
    "project",
    "WeightedGraph",
    "ModelBounds",
    "attach_weights",
    "compute_model_bounds",
    "GreenField",
    "solve_potential",
    "truncation_radius",
    "DirectionProfile",
    "ShapeCurve",
    "direction_profile",
    "predicted_radius",
    "SandpileState",
    "stabilize",
    "stabilize_parallel",
    "shape",
]
