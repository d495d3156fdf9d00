"""Certified reduced-order 4D-Var data assimilation for parametrized
linear transport problems.

Subpackages: finite element assembly (``mesh``, ``fem``), time-discrete
state/adjoint solvers and the PCG optimizer (``solvers``, ``optimizer``),
reduced bases and Galerkin projection (``basis``), POD-Greedy training
(``greedy``), a-posteriori error bounds (``certification``), benchmark
experiments and the command-line driver (``experiments``, ``cli``).
"""

from .basis import ReducedBasis, ReducedOrderModel, lift_control, project_model, reduce_data
from .certification import (CertificateReport, Constants, bound_combined,
                            bound_strong, bound_weak,
                            build_offline_residual_data, certify,
                            coercivity_lower_bound, compute_constants,
                            dual_norms, dual_norms_direct)
from .errors import (AssemblyError, ConfigurationError, NonConvergenceError,
                     SingularSystemError, VariantMismatchError)
from .fem import FullOrderModel, build_taylor_green_model, gaussian_initial_condition
from .greedy import GreedyConfig, GreedyResult, run_greedy
from .mesh import Mesh, build_mesh
from .optimizer import AssimilationResult, SolveOptions, solve_4dvar
from .solvers import AssimilationData, Control, make_data

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "AssimilationData", "AssimilationResult",
    "CertificateReport", "ConfigurationError", "Constants", "Control",
    "FullOrderModel", "GreedyConfig", "GreedyResult", "Mesh",
    "NonConvergenceError", "ReducedBasis", "ReducedOrderModel",
    "SingularSystemError", "SolveOptions", "VariantMismatchError",
    "bound_combined", "bound_strong", "bound_weak",
    "build_mesh", "build_offline_residual_data", "build_taylor_green_model",
    "certify", "coercivity_lower_bound", "compute_constants", "dual_norms",
    "dual_norms_direct", "gaussian_initial_condition", "lift_control",
    "make_data", "project_model", "reduce_data", "run_greedy", "solve_4dvar",
]
