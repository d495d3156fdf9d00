"""Backward-Euler state/adjoint solvers, cost, gradient, Hessian action.

All routines are generic over the operator set: they accept either the
sparse full-order model or a dense reduced-order model, as long as the
object exposes ``M, A, B, M_u, F, C, D_w, X_U0, X_U, tau, K`` and the
cached ``mass_solver / xu_solver / xu0_solver`` factorizations.

Time indexing: a state trajectory is an array of shape (K+1, n_y) with
row k holding y^k.  An adjoint trajectory has shape (K+2, n_y) with row
k holding p^k; p^0 is unused and p^{K+1} = 0.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import VariantMismatchError
from .fem import _Factorized

VARIANTS = ("strong", "weak", "combined")

# Counter for system-matrix factorizations (M + tau A); tests assert the
# per-solve budget.
_system_factorizations = 0


def system_factorization_count():
    return _system_factorizations


@dataclass
class Control:
    """Assimilation control: initial condition block and/or forcing blocks.

    ``u`` holds the K forcing vectors as rows; row k-1 corresponds to
    time step k.
    """

    u0: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None

    @property
    def variant(self):
        if self.u is None:
            return "strong"
        if self.u0 is None:
            return "weak"
        return "combined"

    def copy(self):
        return Control(
            u0=None if self.u0 is None else self.u0.copy(),
            u=None if self.u is None else self.u.copy(),
        )

    def __add__(self, other):
        return _binary(self, other, np.add)

    def __sub__(self, other):
        return _binary(self, other, np.subtract)

    def __mul__(self, scalar):
        return Control(
            u0=None if self.u0 is None else scalar * self.u0,
            u=None if self.u is None else scalar * self.u,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def _binary(a, b, op):
    if (a.u0 is None) != (b.u0 is None) or (a.u is None) != (b.u is None):
        raise VariantMismatchError("controls have different block structure")
    return Control(
        u0=None if a.u0 is None else op(a.u0, b.u0),
        u=None if a.u is None else op(a.u, b.u),
    )


def zero_control(model, variant):
    if variant not in VARIANTS:
        raise VariantMismatchError(f"unknown variant {variant!r}")
    u0 = np.zeros(model.n_u0) if variant in ("strong", "combined") else None
    u = np.zeros((model.K, model.n_u)) if variant in ("weak", "combined") else None
    return Control(u0=u0, u=u)


@dataclass
class AssimilationData:
    """Observations and priors for one assimilation instance.

    ``z_d`` is the (K, ell) array of observed outputs.  ``u_d0`` is the
    background initial condition (None = zero), ``u_d`` the forcing prior
    as a (K, n_u) array (None = zero, the usual unbiased-model choice),
    and ``init_mass_rhs`` the vector m(y_0, .) of the known initial state
    used by the weak variant.
    """

    z_d: np.ndarray
    u_d0: Optional[np.ndarray] = None
    u_d: Optional[np.ndarray] = None
    init_mass_rhs: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None


def make_data(model, z_d, u_d0=None, u_d=None, y0=None):
    """Build full-order assimilation data; precomputes m(y_0, .)."""
    rhs = None if y0 is None else model.M @ y0
    return AssimilationData(z_d=np.asarray(z_d, dtype=float), u_d0=u_d0,
                            u_d=u_d, init_mass_rhs=rhs, y0=y0)


class TimeStepper:
    """One factorization of M + tau A(mu), reused for all time steps.

    The transpose solve reuses the same factorization, so a full
    state+adjoint sweep costs a single factorization.
    """

    def __init__(self, model, mu):
        global _system_factorizations
        sys = model.M + model.tau * model.A.assemble(mu)
        self._lu = _Factorized(sys)
        _system_factorizations += 1

    def solve(self, rhs):
        return self._lu.solve(rhs)

    def solve_transpose(self, rhs):
        return self._lu.solve(rhs, transpose=True)


def _initial_mass_rhs(model, ctrl, data, homogeneous):
    if ctrl.u0 is not None:
        return model.M_u @ ctrl.u0
    if homogeneous:
        return np.zeros(model.n_y)
    if data is None or data.init_mass_rhs is None:
        raise VariantMismatchError(
            "weak-variant solve needs data with a known initial state")
    return data.init_mass_rhs


def solve_state(model, mu, ctrl, data=None, stepper=None, homogeneous=False):
    """March the implicit-Euler state equation forward in time.

    ``homogeneous`` drops the load vector and uses a zero initial state
    when no initial-condition block is present (linearized solves).
    """
    if stepper is None:
        stepper = TimeStepper(model, mu)
    K, tau = model.K, model.tau
    y = np.empty((K + 1, model.n_y))
    mass_rhs = _initial_mass_rhs(model, ctrl, data, homogeneous)
    y[0] = model.mass_solver.solve(mass_rhs)
    forcing = None if ctrl.u is None else ctrl.u
    for k in range(1, K + 1):
        rhs = mass_rhs.copy()
        if not homogeneous:
            rhs += tau * model.F
        if forcing is not None:
            rhs += tau * (model.B @ forcing[k - 1])
        y[k] = stepper.solve(rhs)
        mass_rhs = model.M @ y[k]
    return y


def solve_adjoint(model, mu, y, data=None, stepper=None):
    """March the adjoint backward; p^{K+1} = 0.

    With ``data`` the source is tau C^T D (z_d^k - C y^k); without it the
    linearized source -tau C^T D C y^k is used (Hessian solves).
    """
    if stepper is None:
        stepper = TimeStepper(model, mu)
    K, tau = model.K, model.tau
    p = np.zeros((K + 2, model.n_y))
    CtD = model.C.T @ model.D_w
    for k in range(K, 0, -1):
        misfit = -(model.C @ y[k])
        if data is not None:
            misfit += data.z_d[k - 1]
        rhs = model.M @ p[k + 1] + tau * (CtD @ misfit)
        p[k] = stepper.solve_transpose(rhs)
    return p


def cost(model, mu, ctrl, data, y=None, stepper=None):
    """Discrete 4D-Var cost of ``ctrl`` for the given data."""
    if y is None:
        y = solve_state(model, mu, ctrl, data, stepper)
    tau = model.tau
    J = 0.0
    for k in range(1, model.K + 1):
        d = model.C @ y[k] - data.z_d[k - 1]
        J += 0.5 * tau * d @ (model.D_w @ d)
    if ctrl.u0 is not None:
        d0 = ctrl.u0 if data.u_d0 is None else ctrl.u0 - data.u_d0
        J += 0.5 * d0 @ (model.X_U0 @ d0)
    if ctrl.u is not None:
        du = ctrl.u if data.u_d is None else ctrl.u - data.u_d
        J += 0.5 * tau * np.sum(du * (model.X_U @ du.T).T)
    return J


def gradient(model, mu, ctrl, data, stepper=None, trajectories=None):
    """Gradient of the reduced cost j(u), returned as a dual-space Control."""
    if trajectories is None:
        if stepper is None:
            stepper = TimeStepper(model, mu)
        y = solve_state(model, mu, ctrl, data, stepper)
        p = solve_adjoint(model, mu, y, data, stepper)
    else:
        y, p = trajectories
    g_u0 = None
    g_u = None
    if ctrl.u0 is not None:
        d0 = ctrl.u0 if data.u_d0 is None else ctrl.u0 - data.u_d0
        g_u0 = model.X_U0 @ d0 - model.M_u.T @ p[1]
    if ctrl.u is not None:
        du = ctrl.u if data.u_d is None else ctrl.u - data.u_d
        g_u = model.tau * ((model.X_U @ du.T).T - (model.B.T @ p[1:-1].T).T)
    return Control(u0=g_u0, u=g_u)


def hessian_apply(model, mu, dctrl, stepper=None):
    """Apply the (SPD) reduced-cost Hessian to a control direction."""
    if stepper is None:
        stepper = TimeStepper(model, mu)
    y = solve_state(model, mu, dctrl, stepper=stepper, homogeneous=True)
    p = solve_adjoint(model, mu, y, data=None, stepper=stepper)
    h_u0 = None
    h_u = None
    if dctrl.u0 is not None:
        h_u0 = model.X_U0 @ dctrl.u0 - model.M_u.T @ p[1]
    if dctrl.u is not None:
        h_u = model.tau * ((model.X_U @ dctrl.u.T).T - (model.B.T @ p[1:-1].T).T)
    return Control(u0=h_u0, u=h_u)


def control_pairing(a, b):
    """Plain dual-primal pairing: block-wise Euclidean dot."""
    s = 0.0
    if a.u0 is not None:
        s += float(a.u0 @ b.u0)
    if a.u is not None:
        s += float(np.sum(a.u * b.u))
    return s


def control_metric_dot(model, a, b):
    """Inner product of two primal controls in the scaled block metric."""
    s = 0.0
    if a.u0 is not None:
        s += float(a.u0 @ (model.X_U0 @ b.u0))
    if a.u is not None:
        s += model.tau * float(np.sum(a.u * (model.X_U @ b.u.T).T))
    return s


def control_norm(model, a):
    """Norm in the metric of the error-bound propositions."""
    return np.sqrt(max(control_metric_dot(model, a, a), 0.0))


def apply_preconditioner(model, r):
    """Riesz map from dual to primal controls in the block metric."""
    z_u0 = None
    z_u = None
    if r.u0 is not None:
        z_u0 = model.xu0_solver.solve(r.u0)
    if r.u is not None:
        z_u = model.xu_solver.solve(r.u.T).T / model.tau
    return Control(u0=z_u0, u=z_u)
