"""P1 finite element operators for the Taylor-Green transport benchmark.

Weak form: m(y^k, v) + tau * a(y^k, v; mu) = m(y^{k-1}, v) + tau b(u^k, v)
with a(w, v; mu) = (1/mu) (grad w, grad v) + (beta . grad w, v) and the
divergence-free Taylor-Green velocity beta.  The convection operator is
assembled in skew-symmetric (split) form, so the symmetric part of A(mu)
is exactly (1/mu) times the diffusion stiffness and the coercivity
constant with respect to X_Y is mu_ref / mu to machine precision.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError
from .mesh import Mesh, build_mesh, triangle_geometry

# Sensor boxes of the benchmark: centers and half-width (side 0.1).
SENSOR_CENTERS = np.array([
    (-0.6, 0.6), (0.6, 0.6), (0.6, -0.6), (-0.6, -0.6), (0.0, 0.0),
])
SENSOR_HALF_WIDTH = 0.05
OBS_WEIGHT = 10.0

MU_DOMAIN = (10.0, 50.0)
MU_REF = 30.0

# Affine coefficient functions Theta^q(mu), selected by id.
THETA_FUNCTIONS = {
    "inv_mu": lambda mu: 1.0 / mu,
    "one": lambda mu: 1.0,
}


def taylor_green_velocity(x):
    """Velocity field of the Taylor-Green vortex at points x (n, 2)."""
    s1 = np.sin(np.pi * x[..., 0])
    c1 = np.cos(np.pi * x[..., 0])
    s2 = np.sin(np.pi * x[..., 1])
    c2 = np.cos(np.pi * x[..., 1])
    return np.stack([s1 * c2, -c1 * s2], axis=-1)


@dataclass(frozen=True)
class AffineOperator:
    """Parameter-affine operator sum_q Theta^q(mu) A^q."""

    terms: tuple  # of (coefficient_id, matrix)

    def theta(self, mu):
        return np.array([THETA_FUNCTIONS[cid](mu) for cid, _ in self.terms])

    def assemble(self, mu):
        acc = None
        for coeff, (_, mat) in zip(self.theta(mu), self.terms):
            acc = coeff * mat if acc is None else acc + coeff * mat
        return acc

    @property
    def n_terms(self):
        return len(self.terms)


class _Factorized:
    """Uniform LU wrapper over sparse (splu) and dense (lu_factor) matrices."""

    def __init__(self, mat):
        import scipy.linalg as sla
        import scipy.sparse.linalg as spla

        try:
            if sp.issparse(mat):
                self._lu = spla.splu(sp.csc_matrix(mat))
                self._sparse = True
            else:
                self._lu = sla.lu_factor(np.asarray(mat, dtype=float))
                self._sparse = False
        except Exception as exc:  # singular or structurally broken system
            from .errors import SingularSystemError
            raise SingularSystemError(f"factorization failed: {exc}") from exc

    def solve(self, b, transpose=False):
        b = np.asarray(b, dtype=float)
        if self._sparse:
            return self._lu.solve(b, trans="T" if transpose else "N")
        import scipy.linalg as sla
        return sla.lu_solve(self._lu, b, trans=1 if transpose else 0)


@dataclass(eq=False)
class FullOrderModel:
    """Assembled discrete operators of one benchmark instance.

    All matrices are restricted to the non-Dirichlet degrees of freedom.
    ``X_U0`` is the metric for initial-condition controls and ``X_U`` for
    forcing controls; in the benchmark both equal the mass matrix.
    """

    mesh: Mesh
    free_nodes: np.ndarray
    M: sp.spmatrix
    A: AffineOperator
    B: sp.spmatrix
    M_u: sp.spmatrix
    F: np.ndarray
    C: np.ndarray           # (ell, n_y) dense observation matrix
    D_w: np.ndarray         # (ell, ell) observation weight
    X_Y: sp.spmatrix
    X_U: sp.spmatrix
    tau: float
    K: int
    mu_domain: tuple = MU_DOMAIN
    mu_ref: float = MU_REF
    reduced: bool = field(default=False, repr=False)

    @property
    def X_U0(self):
        return self.X_U

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
    def xy_solver(self):
        return _Factorized(self.X_Y)

    @cached_property
    def xu_solver(self):
        return _Factorized(self.X_U)

    @cached_property
    def xu0_solver(self):
        return self.xu_solver

    def restrict(self, v_full):
        """Restrict a full nodal vector to the free degrees of freedom."""
        return np.asarray(v_full)[..., self.free_nodes]


def assemble_operators(mesh: Mesh):
    """Assemble mass, diffusion, and (skew-symmetrized) convection matrices.

    Returns a dict with full-node matrices ``mass``, ``diffusion``,
    ``convection``.  Convection uses the 3-point edge-midpoint Gauss rule
    with the velocity sampled at quadrature points.
    """
    n = mesh.n_nodes
    local_mass = np.array([[2.0, 1.0, 1.0],
                           [1.0, 2.0, 1.0],
                           [1.0, 1.0, 2.0]]) / 12.0

    rows, cols, m_vals, k_vals, n_vals = [], [], [], [], []
    for tri in mesh.triangles:
        area, grads = triangle_geometry(mesh.nodes, tri)
        if area <= 0.0:
            raise AssemblyError(f"non-positive element area for triangle {tri}")
        p = mesh.nodes[tri]
        midpoints = 0.5 * (p + np.roll(p, -1, axis=0))  # edges (0,1),(1,2),(2,0)
        beta = taylor_green_velocity(midpoints)
        # hat values at the edge midpoints, rows matching the (0,1), (1,2),
        # (2,0) midpoint order above: phi_i = 1/2 on its two edges
        phi = np.array([[0.5, 0.5, 0.0],
                        [0.0, 0.5, 0.5],
                        [0.5, 0.0, 0.5]])
        bg = beta @ grads.T  # (quad, j) values of beta.grad(phi_j)
        n_loc = (area / 3.0) * (phi.T @ bg)  # rows i (test), cols j (trial)
        k_loc = area * (grads @ grads.T)
        m_loc = area * local_mass

        for i in range(3):
            for j in range(3):
                rows.append(tri[i])
                cols.append(tri[j])
                m_vals.append(m_loc[i, j])
                k_vals.append(k_loc[i, j])
                n_vals.append(n_loc[i, j])

    shape = (n, n)
    mass = sp.csr_matrix((m_vals, (rows, cols)), shape=shape)
    diffusion = sp.csr_matrix((k_vals, (rows, cols)), shape=shape)
    convection = sp.csr_matrix((n_vals, (rows, cols)), shape=shape)
    # Skew-symmetric split form of the advection term; exact for the
    # divergence-free no-flux velocity and keeps the symmetric part of
    # A(mu) equal to the scaled diffusion stiffness.
    convection = 0.5 * (convection - convection.T)
    return {"mass": mass, "diffusion": diffusion, "convection": convection}


def assemble_observation(mesh: Mesh):
    """Box-averaging observation matrix C (full nodes) and weight D_w.

    Row i integrates the FE function over sensor box i (clipped against
    the triangulation) and divides by the box area.
    """
    from shapely.geometry import Polygon, box as shapely_box

    n = mesh.n_nodes
    C = np.zeros((len(SENSOR_CENTERS), n))
    box_area = (2 * SENSOR_HALF_WIDTH) ** 2

    for s, (cx, cy) in enumerate(SENSOR_CENTERS):
        sensor = shapely_box(cx - SENSOR_HALF_WIDTH, cy - SENSOR_HALF_WIDTH,
                             cx + SENSOR_HALF_WIDTH, cy + SENSOR_HALF_WIDTH)
        lo = np.array([cx, cy]) - SENSOR_HALF_WIDTH
        hi = np.array([cx, cy]) + SENSOR_HALF_WIDTH
        for tri in mesh.triangles:
            p = mesh.nodes[tri]
            if p[:, 0].max() < lo[0] or p[:, 0].min() > hi[0]:
                continue
            if p[:, 1].max() < lo[1] or p[:, 1].min() > hi[1]:
                continue
            poly = Polygon(p).intersection(sensor)
            if poly.is_empty or poly.area <= 0.0:
                continue
            geoms = getattr(poly, "geoms", [poly])
            area, grads = triangle_geometry(mesh.nodes, tri)
            for g in geoms:
                if g.area <= 0.0:
                    continue
                ring = np.asarray(g.exterior.coords)[:-1]
                # fan triangulation of the (convex) clipped polygon
                for a in range(1, len(ring) - 1):
                    verts = np.array([ring[0], ring[a], ring[a + 1]])
                    d1 = verts[1] - verts[0]
                    d2 = verts[2] - verts[0]
                    sub_area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
                    if sub_area == 0.0:
                        continue
                    # exact integral of each (linear) hat over the sub-triangle
                    for i in range(3):
                        vals = _hat_values(p, grads, i, verts)
                        C[s, tri[i]] += sub_area * vals.mean()
        C[s] /= box_area

    D_w = OBS_WEIGHT * np.eye(len(SENSOR_CENTERS))
    return C, D_w


def _hat_values(p, grads, i, points):
    """Values of the i-th P1 hat function of element ``p`` at ``points``."""
    return 1.0 + (points - p[i]) @ grads[i]


def gaussian_initial_condition(mesh: Mesh, center=(-0.1, 0.8), sigma=0.1,
                               amplitude=1.0):
    """Nodal interpolant of an isotropic Gaussian, zero on Dirichlet nodes."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = np.sum((mesh.nodes - np.asarray(center)) ** 2, axis=1)
    v = amplitude * np.exp(-d2 / (2.0 * sigma ** 2))
    v[mesh.dirichlet_nodes] = 0.0
    return v


def build_taylor_green_model(h=0.08, tau=0.08, num_steps=100):
    """Assemble the full benchmark model on the free degrees of freedom."""
    mesh = build_mesh(h)
    ops = assemble_operators(mesh)
    C_full, D_w = assemble_observation(mesh)

    free = mesh.free_nodes

    def restrict(mat):
        return sp.csr_matrix(mat.tocsr()[free, :][:, free])

    M = restrict(ops["mass"])
    Kd = restrict(ops["diffusion"])
    N = restrict(ops["convection"])
    X_Y = sp.csr_matrix(Kd / MU_REF)
    A = AffineOperator(terms=(("inv_mu", Kd), ("one", N)))

    n_free = len(free)
    return FullOrderModel(
        mesh=mesh,
        free_nodes=free,
        M=M,
        A=A,
        B=M,
        M_u=M,
        F=np.zeros(n_free),
        C=C_full[:, free],
        D_w=D_w,
        X_Y=X_Y,
        X_U=M,
        tau=float(tau),
        K=int(num_steps),
    )
