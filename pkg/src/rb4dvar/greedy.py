"""POD-Greedy construction of the reduced spaces.

Each iteration solves the full-order assimilation problem at the
currently worst-certified parameter, enriches the state space with the
dominant POD mode of the state projection error, then (against the
already-enlarged space) the dominant adjoint mode, and enriches the
control space with either the optimal initial condition itself (strong /
combined) or the dominant POD mode of the optimal forcing trajectory
(weak / combined).  The next parameter maximizes the relative error
bound over the training set, evaluated with the online certification.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import (DEPENDENCE_TOL, ReducedBasis, orthonormal_append,
                    pod_largest_mode, project_error_trajectory, project_model,
                    reduce_data)
from .certification import (Constants, build_offline_residual_data, certify,
                            compute_constants)
from .errors import ConfigurationError
from .optimizer import SolveOptions, solve_4dvar
from .solvers import control_norm

_REL_FLOOR = 1e-300  # guards 0/0 in relative bounds


@dataclass
class GreedyConfig:
    train_set: np.ndarray
    variant: str
    n_max: int = 20
    tol: float = 1e-10
    mu_start: float = None  # default: first training parameter
    solve_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        self.train_set = np.asarray(self.train_set, dtype=float)
        if self.train_set.size == 0:
            raise ConfigurationError("training set is empty")
        if self.variant not in ("strong", "weak", "combined"):
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.n_max < 1:
            raise ConfigurationError("n_max must be at least 1")
        if self.mu_start is None:
            self.mu_start = float(self.train_set[0])


@dataclass
class GreedyIterationRecord:
    n: int
    mu_selected: float
    max_rel_bound: float  # over the training set, after this enrichment
    mu_next: float        # argmax parameter
    dims: tuple
    wall_time: float


@dataclass
class GreedyResult:
    basis: ReducedBasis
    constants: Constants
    trace: list
    variant: str
    train_set: np.ndarray


def _enrich(basis, fom, result, data, variant):
    """One POD-Greedy enrichment from a full-order optimal solution."""
    # dominant state mode of the projection error
    y_err = project_error_trajectory(result.states.T, basis.V_y, fom.X_Y)
    mode = pod_largest_mode(y_err, fom.X_Y)
    if mode is not None:
        V = orthonormal_append(basis.V_y, mode, fom.X_Y)
        if V is not None:
            basis.V_y = V
    # dominant adjoint mode against the enlarged state space
    p_err = project_error_trajectory(result.adjoints[1:-1].T, basis.V_y,
                                     fom.X_Y)
    mode = pod_largest_mode(p_err, fom.X_Y)
    if mode is not None:
        V = orthonormal_append(basis.V_y, mode, fom.X_Y)
        if V is not None:
            basis.V_y = V
    # control-space enrichment
    if variant in ("strong", "combined"):
        V = orthonormal_append(basis.V_u0, result.control.u0, fom.X_U,
                               drop_tol=DEPENDENCE_TOL)
        if V is not None:
            basis.V_u0 = V
    if variant in ("weak", "combined"):
        u_err = project_error_trajectory(result.control.u.T, basis.V_u,
                                         fom.X_U)
        mode = pod_largest_mode(u_err, fom.X_U)
        if mode is not None:
            V = orthonormal_append(basis.V_u, mode, fom.X_U)
            if V is not None:
                basis.V_u = V
    basis.record_iteration()


def evaluate_training_bounds(fom, basis, data, variant, constants,
                             train_set, opts=None):
    """Relative error bounds over a parameter set for the current basis."""
    rom = project_model(fom, basis)
    rdata = reduce_data(fom, basis, data)
    offline = build_offline_residual_data(fom, basis, data, variant)
    rel = np.empty(len(train_set))
    for i, mu in enumerate(train_set):
        rsol = solve_4dvar(rom, mu, rdata, variant, opts)
        rep = certify(offline, rsol, mu, data.z_d, constants)
        denom = max(control_norm(rom, rsol.control), _REL_FLOOR)
        rel[i] = rep.delta / denom
    return rel


def run_greedy(fom, data, config: GreedyConfig, constants=None):
    """POD-Greedy loop; returns the basis, constants, and iteration trace."""
    if constants is None:
        constants = compute_constants(fom)
    basis = ReducedBasis.empty(fom.n_y)
    if config.variant == "weak":
        if data.y0 is None:
            raise ConfigurationError(
                "weak-variant training needs the known initial state")
        y0 = fom.restrict(data.y0) if data.y0.shape[0] != fom.n_y else data.y0
        nrm = np.sqrt(float(y0 @ (fom.X_Y @ y0)))
        if nrm > 0:
            basis.V_y = (y0 / nrm)[:, None]

    mu_next = float(config.mu_start)
    trace = []
    for n in range(1, config.n_max + 1):
        t0 = time.perf_counter()
        mu_sel = mu_next
        fsol = solve_4dvar(fom, mu_sel, data, config.variant,
                           config.solve_options)
        _enrich(basis, fom, fsol, data, config.variant)
        rel = evaluate_training_bounds(fom, basis, data, config.variant,
                                       constants, config.train_set,
                                       config.solve_options)
        imax = int(np.argmax(rel))
        mu_next = float(config.train_set[imax])
        trace.append(GreedyIterationRecord(
            n=n, mu_selected=mu_sel, max_rel_bound=float(rel[imax]),
            mu_next=mu_next, dims=basis.dims,
            wall_time=time.perf_counter() - t0))
        if rel[imax] <= config.tol:
            break
    return GreedyResult(basis=basis, constants=constants, trace=trace,
                        variant=config.variant, train_set=config.train_set)
