"""Essential boundary conditions, slip rotation and the assembled linear system."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..mesh import BoundaryTag, Mesh
from .elements import ElementFamily
from .spaces import FunctionSpace


class GeometryError(ValueError):
    """Raised when a boundary normal cannot be formed."""


@dataclass(frozen=True)
class BoundaryConditions:
    """Velocity boundary data.

    Facets tagged with ``dirichlet_tags`` get ``u = value(x, y)`` (zero when
    ``value`` is None); ``slip_tags`` get ``u . n = 0`` with free tangential
    slip. Remaining facets are stress-free.
    """

    dirichlet_tags: tuple = (BoundaryTag.DIRICHLET_ALL,)
    value: Callable | None = field(default=None, compare=False)
    slip_tags: tuple = ()

    def pressure_has_kernel(self, mesh: Mesh) -> bool:
        """True when no facet is stress-free, so pressure is fixed up to a constant."""
        essential = {int(t) for t in self.dirichlet_tags} | {int(t) for t in self.slip_tags}
        return all(int(t) in essential for t in np.unique(mesh.facet_tags))


@dataclass
class AssembledSystem:
    """One linearized saddle-point system ``[[A, B^T], [B, 0]] [du; dp] = [F; G]``.

    When a slip rotation ``T`` is present, ``A``, ``B`` and ``F`` act on rotated
    velocity coordinates ``u~`` with ``u = T u~``.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    M_nu: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    T: sp.csr_matrix | None = None
    pressure_kernel: bool = True
    eliminated: bool = False

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.constrained] = False
        return mask

    def to_physical(self, du: np.ndarray) -> np.ndarray:
        return du if self.T is None else self.T @ du

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.F, self.G])

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T], [self.B, None]], format="csr")


def dirichlet_data(space: FunctionSpace, bcs: BoundaryConditions) -> tuple[np.ndarray, np.ndarray]:
    """Constrained velocity dofs and their prescribed values (physical frame)."""
    if not bcs.dirichlet_tags:
        return np.empty(0, dtype=np.int64), np.empty(0)
    nodes = space.boundary_nodes(bcs.dirichlet_tags)
    N = space.num_scalar_dofs
    dofs = np.concatenate([nodes, N + nodes])
    if bcs.value is None:
        return dofs, np.zeros(len(dofs))
    xy = space.node_coords[nodes]
    vals = np.asarray(bcs.value(xy[:, 0], xy[:, 1]), dtype=float).reshape(-1, 2)
    return dofs, np.concatenate([vals[:, 0], vals[:, 1]])


def slip_normals(space: FunctionSpace, tags, exclude_nodes=()) -> tuple[np.ndarray, np.ndarray]:
    """Scalar nodes on slip facets and their averaged outward unit normals.

    Vertex normals are the normalised mean of the unit normals of the adjacent
    slip facets; P2 edge nodes take their facet's normal. Nodes listed in
    ``exclude_nodes`` (typically Dirichlet nodes) are skipped.
    """
    mesh = space.mesh
    mask = np.isin(mesh.facet_tags, [int(t) for t in tags])
    if not mask.any():
        return np.empty(0, dtype=np.int64), np.empty((0, 2))
    facets = mesh.facets[mask]
    normals = mesh.facet_normals()[mask]
    acc: dict[int, np.ndarray] = {}
    for (a, b), n in zip(facets, normals):
        for v in (a, b):
            acc[int(v)] = acc.get(int(v), 0.0) + n
    if space.family is ElementFamily.P2:
        edge_ids = space.facet_edge_index(facets)
        for e, n in zip(edge_ids, normals):
            acc[int(mesh.num_vertices + e)] = n.copy()
    excluded = set(int(i) for i in np.asarray(exclude_nodes).ravel())
    nodes = np.array(sorted(k for k in acc if k not in excluded), dtype=np.int64)
    out = np.empty((len(nodes), 2))
    for i, k in enumerate(nodes):
        v = np.asarray(acc[k], dtype=float)
        length = np.linalg.norm(v)
        if length < 1e-12:
            raise GeometryError(f"averaged normal vanishes at node {k}")
        out[i] = v / length
    return nodes, out


def rotation_matrix(space: FunctionSpace, nodes: np.ndarray, normals: np.ndarray) -> sp.csr_matrix:
    """Orthogonal ``T`` with ``u = T u~``; at each node the x-slot of ``u~``
    holds the normal and the y-slot the tangential component."""
    N = space.num_scalar_dofs
    n = space.dim
    diag = np.ones(n)
    diag[nodes] = 0.0
    diag[N + nodes] = 0.0
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [diag]
    nx, ny = normals[:, 0], normals[:, 1]
    tx, ty = -ny, nx
    ix, iy = nodes, N + nodes
    for r, c, v in ((ix, ix, nx), (iy, ix, ny), (ix, iy, tx), (iy, iy, ty)):
        rows.append(r)
        cols.append(c)
        vals.append(v)
    T = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    T = T.tocsr()
    T.eliminate_zeros()
    return T


def rotate_slip_dofs(
    system: AssembledSystem, space: FunctionSpace, tags=(BoundaryTag.LAKE,), exclude_nodes=()
) -> AssembledSystem:
    """Express velocity dofs on slip facets in the (normal, tangent) frame and
    constrain the normal component to zero.

    Must be applied before constraint elimination. Without slip facets the
    system is returned unchanged.
    """
    if system.eliminated:
        raise ValueError("rotate before eliminating constraints")
    nodes, normals = slip_normals(space, tags, exclude_nodes)
    if len(nodes) == 0:
        return system
    T = rotation_matrix(space, nodes, normals)
    A = (T.T @ system.A @ T).tocsr()
    A = 0.5 * (A + A.T)
    B = (system.B @ T).tocsr()
    F = T.T @ system.F
    Tc = T if system.T is None else (system.T @ T).tocsr()
    constrained = np.concatenate([system.constrained, nodes])
    values = np.concatenate([system.values, np.zeros(len(nodes))])
    return replace(system, A=A.tocsr(), B=B, F=F, T=Tc, constrained=constrained, values=values)


def apply_constraints(system: AssembledSystem) -> AssembledSystem:
    """Symmetric elimination: zero constrained rows and columns of ``A`` (unit
    diagonal), zero constrained columns of ``B`` and lift the right-hand side."""
    if system.eliminated:
        return system
    dofs, order = np.unique(system.constrained, return_index=True)
    vals = system.values[order]
    n = system.n
    g = np.zeros(n)
    g[dofs] = vals
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sp.diags(keep)
    F = system.F - system.A @ g
    F[dofs] = vals
    G = system.G - system.B @ g
    A = (K @ system.A @ K + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    B = (system.B @ K).tocsr()
    B.eliminate_zeros()
    return replace(system, A=A, B=B, F=F, G=G, constrained=dofs, values=vals, eliminated=True)


def project_out_constant(q: np.ndarray, M: sp.spmatrix | None = None) -> np.ndarray:
    """Remove the constant component: Euclidean mean, or L2 mean when ``M`` given."""
    if M is None:
        return q - q.mean()
    ones = np.ones(len(q))
    w = M @ ones
    return q - (w @ q) / (w @ ones)
