"""Inner 4D-Var minimization by preconditioned CG on the reduced cost.

The cost j(u) = J(y(u), u; mu) is quadratic, so a single Newton system
H u = -g(0) is solved.  CG runs in the control metric: the block metric
(X_U0 for the initial-condition block, tau X_U per forcing block) acts as
the preconditioner, which makes the preconditioned residual norm equal
to the dual norm of the gradient.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonConvergenceError
from . import solvers
from .solvers import (Control, TimeStepper, apply_preconditioner,
                      control_pairing, gradient, hessian_apply, solve_adjoint,
                      solve_state, zero_control)


@dataclass
class SolveOptions:
    cg_rel_tol: float = 1e-10
    cg_max_iter: int = 10000
    record_iterations: bool = False

    def __post_init__(self):
        if not 0.0 < self.cg_rel_tol < 1.0:
            raise ValueError("cg_rel_tol must lie in (0, 1)")


@dataclass
class AssimilationResult:
    control: Control
    states: np.ndarray
    adjoints: np.ndarray
    cost: float
    cg_iterations: int
    wall_time: float
    residual_history: Optional[list] = field(default=None, repr=False)


def solve_4dvar(model, mu, data, variant, opts=None):
    """Solve the inner (full- or reduced-order) 4D-Var problem at ``mu``."""
    opts = opts or SolveOptions()
    lo, hi = model.mu_domain
    if not lo - 1e-12 <= mu <= hi + 1e-12:
        raise ValueError(f"mu={mu} outside parameter domain [{lo}, {hi}]")

    t0 = time.perf_counter()
    stepper = TimeStepper(model, mu)
    g0 = gradient(model, mu, zero_control(model, variant), data, stepper)

    x = zero_control(model, variant)
    r = -g0
    z = apply_preconditioner(model, r)
    rz = control_pairing(r, z)
    rz0 = rz
    history = [np.sqrt(max(rz, 0.0))]
    iters = 0

    if rz0 > 0.0:
        d = z.copy()
        tol2 = opts.cg_rel_tol ** 2 * rz0
        while rz > tol2:
            if iters >= opts.cg_max_iter:
                raise NonConvergenceError(
                    f"CG did not converge in {opts.cg_max_iter} iterations",
                    residual_history=history)
            Hd = hessian_apply(model, mu, d, stepper)
            alpha = rz / control_pairing(d, Hd)
            x = x + alpha * d
            r = r - alpha * Hd
            z = apply_preconditioner(model, r)
            rz_new = control_pairing(r, z)
            d = z + (rz_new / rz) * d
            rz = rz_new
            iters += 1
            history.append(np.sqrt(max(rz, 0.0)))

    y = solve_state(model, mu, x, data, stepper)
    p = solve_adjoint(model, mu, y, data, stepper)
    J = solvers.cost(model, mu, x, data, y=y)
    return AssimilationResult(
        control=x, states=y, adjoints=p, cost=J, cg_iterations=iters,
        wall_time=time.perf_counter() - t0,
        residual_history=history if opts.record_iterations else None)


def optimality_residual(model, mu, data, result):
    """Max dual-norm residual over the optimality-system equations."""
    y, p, u = result.states, result.adjoints, result.control
    tau, K = model.tau, model.K
    A = model.A.assemble(mu)
    sys = model.M + tau * A

    xy = model.xy_solver

    def ynorm_dual(r):
        return np.sqrt(max(float(r @ xy.solve(r)), 0.0))

    res = 0.0
    # state equation residuals
    mass_rhs = model.M_u @ u.u0 if u.u0 is not None else data.init_mass_rhs
    for k in range(1, K + 1):
        rhs = mass_rhs + tau * model.F
        if u.u is not None:
            rhs = rhs + tau * (model.B @ u.u[k - 1])
        res = max(res, ynorm_dual(sys @ y[k] - rhs) / tau)
        mass_rhs = model.M @ y[k]
    # adjoint equation residuals
    CtD = model.C.T @ model.D_w
    for k in range(K, 0, -1):
        rhs = model.M @ p[k + 1] + tau * (CtD @ (data.z_d[k - 1] - model.C @ y[k]))
        res = max(res, ynorm_dual(sys.T @ p[k] - rhs) / tau)
    # gradient (control optimality) in the dual control norm
    g = gradient(model, mu, u, data, trajectories=(y, p))
    z = apply_preconditioner(model, g)
    res = max(res, np.sqrt(max(control_pairing(g, z), 0.0)))
    return res
