"""Discontinuous Galerkin elasticity with Nitsche-blended cohesive interfaces."""

from .cohesive import CohesiveParams, PureModeLaw
from .dg import DGOperator, Dirichlet, Loads
from .material import IsotropicElastic, MaterialField
from .mesh import Mesh, generate_rect, mark_initial_crack, read_mesh, write_mesh
from .solver import NonlinearSettings, QuasiStaticSolver, StepFailure, StepResult

__version__ = "0.1.0"

__all__ = [
    "CohesiveParams", "PureModeLaw", "DGOperator", "Dirichlet", "Loads", "IsotropicElastic",
    "MaterialField", "Mesh", "generate_rect", "mark_initial_crack", "read_mesh", "write_mesh",
    "NonlinearSettings", "QuasiStaticSolver", "StepFailure", "StepResult",
]
