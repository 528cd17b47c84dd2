"""Immersed CR-P0 finite elements for two-phase Stokes flow on unfitted triangular meshes."""
from .analysis import (
    ConvergenceReport,
    ErrorNorms,
    ExactSolution,
    StudyConfig,
    compute_errors,
    interpolant,
    rate,
    run_study,
    solve_problem,
)
from .assembly import SaddlePointSystem, assemble, assemble_space, body_force, dirichlet_averages
from .exceptions import (
    AssumptionViolated,
    DegenerateCut,
    DegenerateTriangle,
    GeometryError,
    InvalidParams,
    MissingCutData,
    NoRoot,
    ResidualTooLarge,
    SingularMatrix,
    SingularSystem,
    StokesIFEError,
)
from .geometry import MINUS, PLUS, CircleLevelSet, CutElement, CutMesh, LinearLevelSet, classify, cut_mesh
from .ife import IFELocalBasis, build_cr_basis, build_ife_basis, eval_basis, oracle_solve_14x14
from .mesh import Mesh, build_uniform_mesh
from .solver import SolutionField, solve
from .space import IFESpace, build_space

__version__ = "0.1.0"
