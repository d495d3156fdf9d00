"""Structured triangular mesh on the square (-1,1)^2.

The grid splits every square cell into two triangles along the same
diagonal.  Homogeneous Dirichlet conditions are imposed on the lower
boundary (x2 = -1); the remaining boundary is natural.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

_DIRICHLET_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray       # (n_nodes, 2) coordinates
    triangles: np.ndarray   # (n_tri, 3) vertex indices, positively oriented
    dirichlet_nodes: np.ndarray  # node indices on x2 = -1
    h: float

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def free_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)


def build_mesh(h):
    """Uniform triangulation of (-1,1)^2 with element size ``h``.

    ``2/h`` must be an integer; the grid then has ``(2/h + 1)**2`` nodes
    and ``2 * (2/h)**2`` triangles.
    """
    if h <= 0:
        raise ConfigurationError(f"mesh size must be positive, got h={h}")
    n = 2.0 / h
    if abs(n - round(n)) > 1e-9:
        raise ConfigurationError(f"2/h must be an integer, got h={h}")
    n = int(round(n))

    coords_1d = -1.0 + h * np.arange(n + 1)
    x1, x2 = np.meshgrid(coords_1d, coords_1d, indexing="xy")
    nodes = np.column_stack([x1.ravel(), x2.ravel()])

    def nid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.asarray(tris, dtype=np.int64)

    dirichlet = np.flatnonzero(np.abs(nodes[:, 1] + 1.0) < _DIRICHLET_TOL)
    return Mesh(nodes=nodes, triangles=triangles,
                dirichlet_nodes=dirichlet, h=float(h))


def triangle_geometry(nodes, tri):
    """Return (area, grads) for a P1 triangle.

    ``grads`` is the 3x2 array of hat-function gradients.
    """
    p = nodes[tri]
    d1 = p[1] - p[0]
    d2 = p[2] - p[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    area = 0.5 * det
    # rows: grad of hat at each vertex
    grads = np.array([
        [p[1][1] - p[2][1], p[2][0] - p[1][0]],
        [p[2][1] - p[0][1], p[0][0] - p[2][0]],
        [p[0][1] - p[1][1], p[1][0] - p[0][0]],
    ]) / det
    return area, grads
