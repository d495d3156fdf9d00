"""Reduced bases and Galerkin-projected reduced-order models."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .fem import AffineOperator, _Factorized
from .solvers import AssimilationData, Control

_ORTHO_ROUNDS = 2          # repeated Gram-Schmidt passes
DEPENDENCE_TOL = 1e-8      # relative threshold for discarding snapshots


def _as_columns(snapshots):
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    return S


def pod_largest_mode(snapshots, metric):
    """Dominant POD mode of the snapshot set in the given inner product.

    ``snapshots`` holds one snapshot per column.  Returns the mode
    normalized to unit metric norm, with the largest-magnitude entry made
    positive, or None if the snapshot set is (numerically) zero.
    """
    S = _as_columns(snapshots)
    G = S.T @ (metric @ S)
    scale = np.trace(G)
    if scale <= 0.0 or not np.isfinite(scale):
        return None
    w, V = np.linalg.eigh(G)
    lam = w[-1]
    if lam <= 1e-14 * scale:
        return None
    zeta = S @ V[:, -1] / np.sqrt(lam)
    imax = np.argmax(np.abs(zeta))
    if zeta[imax] < 0:
        zeta = -zeta
    return zeta


def project_error_trajectory(traj, basis, metric):
    """Orthogonal-projection error of each snapshot onto span(basis).

    ``traj`` holds snapshots as columns; ``basis`` must have
    metric-orthonormal columns.  An empty basis returns the trajectory
    unchanged.
    """
    S = _as_columns(traj)
    if basis is None or basis.shape[1] == 0:
        return S.copy()
    return S - basis @ (basis.T @ (metric @ S))


def orthonormal_append(V, v, metric, drop_tol=None):
    """Append ``v`` to the metric-orthonormal column set ``V``.

    Returns the enlarged matrix, or None if ``v`` is linearly dependent
    (component outside span(V) below ``drop_tol`` relative norm).
    """
    v = np.asarray(v, dtype=float).copy()
    nrm0 = np.sqrt(float(v @ (metric @ v)))
    if nrm0 == 0.0:
        return None
    for _ in range(_ORTHO_ROUNDS):
        if V.shape[1]:
            v -= V @ (V.T @ (metric @ v))
    nrm = np.sqrt(max(float(v @ (metric @ v)), 0.0))
    if drop_tol is not None and nrm <= drop_tol * nrm0:
        return None
    return np.column_stack([V, v / nrm])


@dataclass
class ReducedBasis:
    """Orthonormal spaces for state/adjoint (Y), initial condition (U0),
    and model-error forcing (U), plus the per-iteration dimension history.
    """

    V_y: np.ndarray
    V_u0: np.ndarray
    V_u: np.ndarray
    history: list = field(default_factory=list)  # (N_Y, N_U0, N_U) per iter

    @classmethod
    def empty(cls, n):
        z = np.zeros((n, 0))
        return cls(V_y=z.copy(), V_u0=z.copy(), V_u=z.copy())

    @property
    def N(self):
        return len(self.history)

    @property
    def dims(self):
        return (self.V_y.shape[1], self.V_u0.shape[1], self.V_u.shape[1])

    def record_iteration(self):
        self.history.append(self.dims)

    def truncate(self, n):
        """Basis state after greedy iteration ``n`` (leading columns)."""
        if not 1 <= n <= self.N:
            raise ValueError(f"iteration {n} outside 1..{self.N}")
        ny, nu0, nu = self.history[n - 1]
        return ReducedBasis(V_y=self.V_y[:, :ny], V_u0=self.V_u0[:, :nu0],
                            V_u=self.V_u[:, :nu], history=self.history[:n])


@dataclass(eq=False)
class ReducedOrderModel:
    """Dense Galerkin projection of a full-order model.

    Bases are orthonormal, so the reduced inner-product matrices are
    identities (of different sizes for the U0 and U blocks).
    """

    M: np.ndarray
    A: AffineOperator
    B: np.ndarray
    M_u: np.ndarray
    F: np.ndarray
    C: np.ndarray
    D_w: np.ndarray
    X_Y: np.ndarray
    X_U0: np.ndarray
    X_U: np.ndarray
    tau: float
    K: int
    mu_domain: tuple
    mu_ref: float
    reduced: bool = field(default=True, repr=False)

    @property
    def n_y(self):
        return self.M.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_u0(self):
        return self.M_u.shape[1]

    @property
    def ell(self):
        return self.C.shape[0]

    @cached_property
    def mass_solver(self):
        return _Factorized(self.M)

    @cached_property
    def xu_solver(self):
        return _Factorized(self.X_U) if self.n_u else _IdentitySolver()

    @cached_property
    def xu0_solver(self):
        return _Factorized(self.X_U0) if self.n_u0 else _IdentitySolver()


class _IdentitySolver:
    def solve(self, b, transpose=False):
        return np.asarray(b, dtype=float)


def project_model(fom, basis: ReducedBasis) -> ReducedOrderModel:
    """Project all operators of ``fom`` onto the reduced spaces."""
    Vy, Vu0, Vu = basis.V_y, basis.V_u0, basis.V_u
    if Vy.shape[1] == 0:
        raise ValueError("state basis is empty")
    terms = tuple((cid, Vy.T @ (mat @ Vy)) for cid, mat in fom.A.terms)
    return ReducedOrderModel(
        M=Vy.T @ (fom.M @ Vy),
        A=AffineOperator(terms=terms),
        B=Vy.T @ (fom.B @ Vu),
        M_u=Vy.T @ (fom.M_u @ Vu0),
        F=Vy.T @ fom.F,
        C=fom.C @ Vy,
        D_w=fom.D_w,
        X_Y=np.eye(Vy.shape[1]),
        X_U0=np.eye(Vu0.shape[1]),
        X_U=np.eye(Vu.shape[1]),
        tau=fom.tau,
        K=fom.K,
        mu_domain=fom.mu_domain,
        mu_ref=fom.mu_ref,
    )


def reduce_data(fom, basis: ReducedBasis, data: AssimilationData):
    """Project priors and the known initial state onto the reduced spaces.

    Projected priors keep the reduced optimality system Galerkin-exact;
    the constant offset in the cost is recovered by
    ``cost_of_reduced_solution`` when true cost values are needed.
    """
    u_d0 = None
    if data.u_d0 is not None and basis.V_u0.shape[1]:
        u_d0 = basis.V_u0.T @ (fom.X_U @ data.u_d0)
    u_d = None
    if data.u_d is not None and basis.V_u.shape[1]:
        u_d = (basis.V_u.T @ (fom.X_U @ data.u_d.T)).T
    rhs = None
    if data.init_mass_rhs is not None:
        rhs = basis.V_y.T @ data.init_mass_rhs
    return AssimilationData(z_d=data.z_d, u_d0=u_d0, u_d=u_d,
                            init_mass_rhs=rhs)


def lift_control(basis: ReducedBasis, ctrl: Control) -> Control:
    """Expand reduced control coefficients into full FE vectors."""
    u0 = None if ctrl.u0 is None else basis.V_u0 @ ctrl.u0
    u = None if ctrl.u is None else (basis.V_u @ ctrl.u.T).T
    return Control(u0=u0, u=u)


def cost_of_reduced_solution(fom, basis, rom, result, data):
    """True (full-norm) cost of a reduced-order optimum.

    The observation term is exact from the reduced trajectory; the
    regularization terms are evaluated in the full control metric after
    lifting.
    """
    tau = fom.tau
    J = 0.0
    for k in range(1, fom.K + 1):
        d = rom.C @ result.states[k] - data.z_d[k - 1]
        J += 0.5 * tau * d @ (fom.D_w @ d)
    lifted = lift_control(basis, result.control)
    if lifted.u0 is not None:
        d0 = lifted.u0 if data.u_d0 is None else lifted.u0 - data.u_d0
        J += 0.5 * d0 @ (fom.X_U @ d0)
    if lifted.u is not None:
        du = lifted.u if data.u_d is None else lifted.u - data.u_d
        J += 0.5 * tau * np.sum(du * (fom.X_U @ du.T).T)
    return J
