"""A-posteriori error bounds for the reduced-order 4D-Var solutions.

Offline, Riesz representers of every affine residual ingredient are
computed once and stored as Gram blocks; online, the residual dual norms
are quadratic forms in the reduced coefficients and the affine
parameter functions, at cost independent of the FE dimension.
``dual_norms_direct`` provides the dense full-space Riesz evaluation
used as the independent oracle in tests.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import ReducedBasis, lift_control
from .fem import THETA_FUNCTIONS
from .solvers import AssimilationData

# Quadratic-form dual norms lose accuracy once residuals approach machine
# zero; negative round-off values are clamped (standard RB practice, bounds
# then carry a ~1e-7 relative floor).
_CLAMP = 0.0


def _dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


@dataclass(frozen=True)
class Constants:
    """Continuity constants and the coercivity lower bound."""

    gamma_b: float
    gamma_c: float
    mu_ref: float
    mu_domain: tuple

    def alpha_lb(self, mu):
        return coercivity_lower_bound(mu, self.mu_ref, self.mu_domain)


def coercivity_lower_bound(mu, mu_ref=30.0, mu_domain=(10.0, 50.0)):
    """Min-theta lower bound mu_ref / mu for the benchmark operator."""
    lo, hi = mu_domain
    if not lo - 1e-12 <= mu <= hi + 1e-12:
        raise ValueError(f"mu={mu} outside parameter domain [{lo}, {hi}]")
    return mu_ref / mu


def coercivity_constant(fom, mu):
    """Exact coercivity constant via the generalized eigenproblem
    (symmetric part of A(mu) against X_Y).  Dense; test-scale meshes only.
    """
    A = _dense(fom.A.assemble(mu))
    Asym = 0.5 * (A + A.T)
    w = sla.eigh(Asym, _dense(fom.X_Y), eigvals_only=True)
    return w[0]


def compute_gamma_c(fom):
    """Continuity constant of the observation operator w.r.t. X_Y."""
    G = fom.C.T @ fom.D_w @ fom.C
    w = sla.eigh(0.5 * (G + G.T), _dense(fom.X_Y), eigvals_only=True)
    return float(np.sqrt(max(w[-1], 0.0)))


def compute_gamma_b(fom):
    """Continuity constant of the control-to-state form b(., .)."""
    Bd = _dense(fom.B)
    S = sla.solve(_dense(fom.X_Y), Bd, assume_a="pos")
    G = Bd.T @ S
    w = sla.eigh(0.5 * (G + G.T), _dense(fom.X_U), eigvals_only=True)
    return float(np.sqrt(max(w[-1], 0.0)))


def compute_constants(fom):
    return Constants(gamma_b=compute_gamma_b(fom), gamma_c=compute_gamma_c(fom),
                     mu_ref=fom.mu_ref, mu_domain=fom.mu_domain)


class _IngredientBlocks:
    """Column layout bookkeeping for the residual Gram matrices."""

    def __init__(self):
        self.columns = []
        self.slices = {}
        self._m = 0

    def add(self, name, cols):
        cols = np.atleast_2d(np.asarray(cols, dtype=float))
        if cols.shape[0] == 1 and cols.size > 1:  # a single vector
            cols = cols.T
        k = cols.shape[1]
        self.slices[name] = slice(self._m, self._m + k)
        self.columns.append(cols)
        self._m += k

    def matrix(self):
        return np.hstack(self.columns) if self.columns else np.zeros((0, 0))

    @property
    def m(self):
        return self._m


@dataclass(eq=False)
class ResidualOfflineData:
    """Gram blocks of Riesz representers for all residual ingredients."""

    variant: str
    gram_y: np.ndarray
    slices_y: dict
    gram_u: np.ndarray
    slices_u: dict
    theta_ids: tuple
    C_r: np.ndarray          # observation matrix on the reduced state space
    tau: float
    K: int
    dims: tuple              # (N_Y, N_U0, N_U)
    has_ud0: bool
    has_ud: bool

    def theta(self, mu):
        return np.array([THETA_FUNCTIONS[cid](mu) for cid in self.theta_ids])


def build_offline_residual_data(fom, basis: ReducedBasis,
                                data: AssimilationData, variant):
    """Riesz-representer Gram blocks for the given basis and data."""
    Vy, Vu0, Vu = basis.V_y, basis.V_u0, basis.V_u
    has_u0 = variant in ("strong", "combined")
    has_forcing = variant in ("weak", "combined")

    yb = _IngredientBlocks()
    yb.add("f", fom.F[:, None])
    for q, (cid, mat) in enumerate(fom.A.terms):
        yb.add(f"Ay{q}", mat @ Vy)
    for q, (cid, mat) in enumerate(fom.A.terms):
        yb.add(f"Aty{q}", mat.T @ Vy)
    yb.add("My", fom.M @ Vy)
    if has_u0 and Vu0.shape[1]:
        yb.add("Mu0", fom.M @ Vu0)
    if variant == "weak":
        if data.init_mass_rhs is None:
            raise ValueError("weak variant needs the known initial state")
        yb.add("My0", data.init_mass_rhs[:, None])
    if has_forcing and Vu.shape[1]:
        yb.add("Bu", fom.B @ Vu)
    yb.add("CtD", fom.C.T @ fom.D_w)

    E_y = yb.matrix()
    R_y = fom.xy_solver.solve(E_y)
    gram_y = E_y.T @ R_y
    gram_y = 0.5 * (gram_y + gram_y.T)

    ub = _IngredientBlocks()
    if has_u0:
        ub.add("MutVy", fom.M_u.T @ Vy)
        if Vu0.shape[1]:
            ub.add("U0", fom.X_U @ Vu0)
        if data.u_d0 is not None:
            ub.add("ud0", (fom.X_U @ data.u_d0)[:, None])
    if has_forcing:
        ub.add("BtVy", fom.B.T @ Vy)
        if Vu.shape[1]:
            ub.add("Uu", fom.X_U @ Vu)
        if data.u_d is not None:
            ub.add("ud", (fom.X_U @ data.u_d.T))
    E_u = ub.matrix()
    if E_u.size:
        R_u = fom.xu_solver.solve(E_u)
        gram_u = E_u.T @ R_u
        gram_u = 0.5 * (gram_u + gram_u.T)
    else:
        gram_u = np.zeros((0, 0))

    return ResidualOfflineData(
        variant=variant, gram_y=gram_y, slices_y=yb.slices,
        gram_u=gram_u, slices_u=ub.slices,
        theta_ids=tuple(cid for cid, _ in fom.A.terms),
        C_r=fom.C @ Vy, tau=fom.tau, K=fom.K,
        dims=(Vy.shape[1], Vu0.shape[1], Vu.shape[1]),
        has_ud0=data.u_d0 is not None, has_ud=data.u_d is not None)


@dataclass
class DualNorms:
    R_y: float
    R_p: float
    r_u0: Optional[float] = None   # ||r_u||_{U'} (strong) or ||r_u^0||_{U'}
    R_u: Optional[float] = None    # time-aggregated forcing residual


def _quadform_rows(G, Cmat):
    vals = np.einsum("ki,ij,kj->k", Cmat, G, Cmat)
    return np.maximum(vals, _CLAMP)


def dual_norms(offline: ResidualOfflineData, result, mu, z_d):
    """Online residual dual norms from the offline Gram data."""
    K, tau = offline.K, offline.tau
    N_Y, N_U0, N_U = offline.dims
    theta = offline.theta(mu)
    sy, su = offline.slices_y, offline.slices_u
    y_hat = result.states      # (K+1, N_Y)
    p_hat = result.adjoints    # (K+2, N_Y)
    ctrl = result.control
    variant = offline.variant

    # state residuals
    Cy = np.zeros((K, offline.gram_y.shape[0]))
    Cy[:, sy["f"]] = 1.0
    for q, th in enumerate(theta):
        Cy[:, sy[f"Ay{q}"]] = -th * y_hat[1:]
    dy = (y_hat[1:] - y_hat[:-1]) / tau
    Cy[:, sy["My"]] = -dy
    # step k=1 carries the control/known initial state, not y_hat[0]
    Cy[0, sy["My"]] = -y_hat[1] / tau
    if variant in ("strong", "combined") and "Mu0" in sy:
        Cy[0, sy["Mu0"]] = ctrl.u0 / tau
    if variant == "weak":
        Cy[0, sy["My0"]] = 1.0 / tau
    if "Bu" in sy and ctrl.u is not None:
        Cy[:, sy["Bu"]] = ctrl.u
    R_y = np.sqrt(tau * np.sum(_quadform_rows(offline.gram_y, Cy)))

    # adjoint residuals
    Cp = np.zeros_like(Cy)
    for q, th in enumerate(theta):
        Cp[:, sy[f"Aty{q}"]] = -th * p_hat[1:-1]
    Cp[:, sy["My"]] = -(p_hat[1:-1] - p_hat[2:]) / tau
    Cp[:, sy["CtD"]] = z_d - y_hat[1:] @ offline.C_r.T
    R_p = np.sqrt(tau * np.sum(_quadform_rows(offline.gram_y, Cp)))

    # control residuals
    r_u0 = None
    R_u = None
    if variant in ("strong", "combined"):
        c = np.zeros(offline.gram_u.shape[0])
        c[su["MutVy"]] = p_hat[1]
        if "U0" in su:
            c[su["U0"]] = -ctrl.u0
        if offline.has_ud0:
            c[su["ud0"]] = 1.0
        r_u0 = np.sqrt(max(float(c @ offline.gram_u @ c), _CLAMP))
    if variant in ("weak", "combined"):
        Cu = np.zeros((K, offline.gram_u.shape[0]))
        Cu[:, su["BtVy"]] = p_hat[1:-1]
        if "Uu" in su and ctrl.u is not None:
            Cu[:, su["Uu"]] = -ctrl.u
        if offline.has_ud:
            Cu[np.arange(K), su["ud"].start + np.arange(K)] = 1.0
        R_u = np.sqrt(tau * np.sum(_quadform_rows(offline.gram_u, Cu)))
    return DualNorms(R_y=float(R_y), R_p=float(R_p), r_u0=r_u0, R_u=R_u)


def dual_norms_direct(fom, basis: ReducedBasis, result, mu, data, variant):
    """Dense full-space Riesz evaluation of the residual dual norms.

    Independent of the Gram machinery; used as the offline-online oracle.
    """
    tau, K = fom.tau, fom.K
    A = fom.A.assemble(mu)
    Vy = basis.V_y
    lifted = lift_control(basis, result.control)
    Y = result.states @ Vy.T
    P = result.adjoints @ Vy.T
    CtD = fom.C.T @ fom.D_w

    def ydual(r):
        return max(float(r @ fom.xy_solver.solve(r)), 0.0)

    def udual(r):
        return max(float(r @ fom.xu_solver.solve(r)), 0.0)

    if variant == "weak":
        mass_prev = data.init_mass_rhs.copy()
    else:
        mass_prev = fom.M @ lifted.u0

    ry2 = 0.0
    rp2 = 0.0
    for k in range(1, K + 1):
        r = fom.F - A @ Y[k] - (fom.M @ Y[k] - mass_prev) / tau
        if lifted.u is not None:
            r = r + fom.B @ lifted.u[k - 1]
        ry2 += ydual(r)
        mass_prev = fom.M @ Y[k]

        rp = CtD @ (data.z_d[k - 1] - fom.C @ Y[k]) - A.T @ P[k] \
            - (fom.M @ (P[k] - P[k + 1])) / tau
        rp2 += ydual(rp)

    r_u0 = None
    R_u = None
    if variant in ("strong", "combined"):
        d0 = lifted.u0 if data.u_d0 is None else lifted.u0 - data.u_d0
        r = fom.M_u.T @ P[1] - fom.X_U @ d0
        r_u0 = np.sqrt(udual(r))
    if variant in ("weak", "combined"):
        ru2 = 0.0
        for k in range(1, K + 1):
            duk = lifted.u[k - 1]
            if data.u_d is not None:
                duk = duk - data.u_d[k - 1]
            r = fom.B.T @ P[k] - fom.X_U @ duk
            ru2 += udual(r)
        R_u = np.sqrt(tau * ru2)
    return DualNorms(R_y=np.sqrt(tau * ry2), R_p=np.sqrt(tau * rp2),
                     r_u0=r_u0, R_u=R_u)


@dataclass
class CertificateReport:
    variant: str
    mu: float
    R_y: float
    R_p: float
    r_u0: Optional[float]
    R_u: Optional[float]
    alpha_lb: float
    c1: float
    c2: float
    delta: float
    effectivity: Optional[float] = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def _check_nonneg(**kwargs):
    for name, v in kwargs.items():
        if v is None:
            continue
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")


def _delta(c1, c2):
    return c1 + np.sqrt(c1 * c1 + c2)


def bound_strong(R_y, R_p, r_u_norm, alpha_lb, gamma_c, mu=np.nan):
    """Control error bound: ||u* - u_N*||_U <= c1 + sqrt(c1^2 + c2)."""
    _check_nonneg(R_y=R_y, R_p=R_p, r_u_norm=r_u_norm, gamma_c=gamma_c)
    if alpha_lb <= 0:
        raise ValueError("alpha_lb must be positive")
    c1 = 0.5 * (r_u_norm + R_p / np.sqrt(alpha_lb))
    c2 = (np.sqrt(2.0) + 1.0) / alpha_lb * R_y * R_p \
        + gamma_c ** 2 / (2.0 * alpha_lb ** 2) * R_y ** 2
    return CertificateReport(variant="strong", mu=mu, R_y=R_y, R_p=R_p,
                             r_u0=r_u_norm, R_u=None, alpha_lb=alpha_lb,
                             c1=c1, c2=c2, delta=_delta(c1, c2))


def bound_weak(R_y, R_p, R_u, alpha_lb, gamma_b, gamma_c, mu=np.nan):
    """Bound on the time-aggregated model-error norm."""
    _check_nonneg(R_y=R_y, R_p=R_p, R_u=R_u, gamma_b=gamma_b, gamma_c=gamma_c)
    if alpha_lb <= 0:
        raise ValueError("alpha_lb must be positive")
    c1 = 0.5 * (R_u + np.sqrt(2.0) * gamma_b / alpha_lb * R_p)
    c2 = 2.0 * np.sqrt(2.0) / alpha_lb * R_y * R_p \
        + gamma_c ** 2 / (2.0 * alpha_lb ** 2) * R_y ** 2
    return CertificateReport(variant="weak", mu=mu, R_y=R_y, R_p=R_p,
                             r_u0=None, R_u=R_u, alpha_lb=alpha_lb,
                             c1=c1, c2=c2, delta=_delta(c1, c2))


def bound_combined(R_y, R_p, R_u0, R_u, alpha_lb, gamma_b, gamma_c, mu=np.nan):
    """Bound on the mixed initial-condition/forcing error norm."""
    _check_nonneg(R_y=R_y, R_p=R_p, R_u0=R_u0, R_u=R_u,
                  gamma_b=gamma_b, gamma_c=gamma_c)
    if alpha_lb <= 0:
        raise ValueError("alpha_lb must be positive")
    c1 = 0.5 * (np.sqrt(R_u0 ** 2 + R_u ** 2)
                + np.sqrt(2.0 * gamma_b ** 2 / alpha_lb ** 2 + 1.0 / alpha_lb) * R_p)
    c2 = 2.0 * np.sqrt(2.0) / alpha_lb * R_y * R_p \
        + gamma_c ** 2 / (2.0 * alpha_lb ** 2) * R_y ** 2
    return CertificateReport(variant="combined", mu=mu, R_y=R_y, R_p=R_p,
                             r_u0=R_u0, R_u=R_u, alpha_lb=alpha_lb,
                             c1=c1, c2=c2, delta=_delta(c1, c2))


def state_energy_bound(R_y, alpha_lb, e_u_norm):
    """Diagnostic spatio-temporal energy-norm bound for the state error."""
    _check_nonneg(R_y=R_y, e_u_norm=e_u_norm)
    if alpha_lb <= 0:
        raise ValueError("alpha_lb must be positive")
    return R_y ** 2 / alpha_lb ** 2 + e_u_norm ** 2 / alpha_lb


def certify(offline: ResidualOfflineData, result, mu, z_d,
            constants: Constants, error=None):
    """Evaluate dual norms and the variant's error bound at ``mu``."""
    dn = dual_norms(offline, result, mu, z_d)
    alpha = constants.alpha_lb(mu)
    if offline.variant == "strong":
        rep = bound_strong(dn.R_y, dn.R_p, dn.r_u0, alpha, constants.gamma_c,
                           mu=mu)
    elif offline.variant == "weak":
        rep = bound_weak(dn.R_y, dn.R_p, dn.R_u, alpha, constants.gamma_b,
                         constants.gamma_c, mu=mu)
    else:
        rep = bound_combined(dn.R_y, dn.R_p, dn.r_u0, dn.R_u, alpha,
                             constants.gamma_b, constants.gamma_c, mu=mu)
    if error is not None:
        rep.effectivity = rep.delta / error if error > 0 else np.inf
    return rep
