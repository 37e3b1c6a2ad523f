"""Phase-field brittle fracture with isogeometric analysis on non-conforming multipatch NURBS meshes."""
from .assembly import Discretization
from .constitutive import MaterialParams
from .multipatch import InterfaceDecl, MultipatchModel, classify_dofs
from .problems import PROBLEMS, ProblemDefinition, build_problem
from .solver import LoadSchedule, SolverConfig, run_simulation
from .splines import NurbsPatch

__all__ = [
    "Discretization",
    "InterfaceDecl",
    "LoadSchedule",
    "MaterialParams",
    "MultipatchModel",
    "NurbsPatch",
    "PROBLEMS",
    "ProblemDefinition",
    "SolverConfig",
    "build_problem",
    "classify_dofs",
    "run_simulation",
]

__version__ = "0.1.0"
