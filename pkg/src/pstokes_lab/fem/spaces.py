"""Degree-of-freedom layout for scalar and vector-valued spaces."""
from __future__ import annotations

import numpy as np

from ..mesh import BoundaryTag, Mesh
from .elements import LOCAL_EDGES, ElementFamily


def _mesh_edges(mesh: Mesh):
    """Unique edges and, per cell, the global index of local edges (1,2),(2,0),(0,1)."""
    local = np.stack([mesh.cells[:, list(e)] for e in LOCAL_EDGES], axis=1)  # (M, 3, 2)
    flat = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


class FunctionSpace:
    """Continuous Lagrange space on ``mesh``.

    Scalar dofs are numbered vertices first, then edges (P2) or cells (bubble).
    A vector space with ``components=2`` is blocked by component: global dof
    ``c * num_scalar_dofs + i``. Local vector dofs are ordered the same way,
    ``c * num_basis + a``.
    """

    def __init__(self, mesh: Mesh, family: ElementFamily, components: int = 1):
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.mesh = mesh
        self.family = family
        self.components = components
        nv = mesh.num_vertices
        if family is ElementFamily.P1:
            self.cell_dofs = mesh.cells.copy()
            self.node_coords = mesh.vertices.copy()
            self.num_scalar_dofs = nv
        elif family is ElementFamily.P2:
            edges, cell_edges = _mesh_edges(mesh)
            self.edges = edges
            self.cell_dofs = np.hstack([mesh.cells, nv + cell_edges])
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.node_coords = np.vstack([mesh.vertices, mids])
            self.num_scalar_dofs = nv + len(edges)
        elif family is ElementFamily.P1_BUBBLE:
            ids = nv + np.arange(mesh.num_cells)
            self.cell_dofs = np.hstack([mesh.cells, ids[:, None]])
            centroids = mesh.vertices[mesh.cells].mean(axis=1)
            self.node_coords = np.vstack([mesh.vertices, centroids])
            self.num_scalar_dofs = nv + mesh.num_cells
        else:  # pragma: no cover
            raise ValueError(family)
        self.cell_dofs.setflags(write=False)
        self._boundary_cache: dict = {}

    @property
    def num_basis(self) -> int:
        return self.family.num_basis

    @property
    def dim(self) -> int:
        return self.components * self.num_scalar_dofs

    def vector_cell_dofs(self) -> np.ndarray:
        """Global dofs per cell for all components, shape (M, components*nb)."""
        return np.hstack([c * self.num_scalar_dofs + self.cell_dofs for c in range(self.components)])

    def boundary_nodes(self, tags) -> np.ndarray:
        """Scalar node indices lying on facets with any of ``tags`` (sorted)."""
        key = tuple(sorted(int(t) for t in tags))
        if key in self._boundary_cache:
            return self._boundary_cache[key]
        mesh = self.mesh
        mask = np.isin(mesh.facet_tags, key)
        facets = mesh.facets[mask]
        nodes = [facets.ravel()]
        if self.family is ElementFamily.P2 and len(facets):
            nodes.append(mesh.num_vertices + self.facet_edge_index(facets))
        out = np.unique(np.concatenate(nodes)) if nodes[0].size else np.empty(0, dtype=np.int64)
        self._boundary_cache[key] = out
        return out

    def facet_edge_index(self, facets: np.ndarray) -> np.ndarray:
        """Index into ``self.edges`` of each given boundary facet (P2 only)."""
        keys = np.sort(facets, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(self.edges)}
        return np.array([lookup[tuple(k)] for k in keys], dtype=np.int64)

    def boundary_dofs(self, tags) -> np.ndarray:
        """All component dofs on facets with ``tags``."""
        nodes = self.boundary_nodes(tags)
        return np.concatenate([c * self.num_scalar_dofs + nodes for c in range(self.components)])

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolation of ``func(x, y)``; returns coefficients of length ``dim``.

        For vector spaces ``func`` returns an array with trailing axis of size 2.
        The bubble coefficient is chosen so that the interpolant matches ``func``
        at the barycentre.
        """
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        vals = np.asarray(func(x, y), dtype=float)
        if self.components == 1:
            vals = vals.reshape(-1, 1)
        else:
            vals = vals.reshape(-1, self.components)
        if self.family is ElementFamily.P1_BUBBLE:
            nv = self.mesh.num_vertices
            lin = vals[self.mesh.cells].mean(axis=1)
            vals = vals.copy()
            vals[nv:] -= lin
        return vals.T.ravel().copy()


def velocity_space(mesh: Mesh, element: str) -> FunctionSpace:
    element = element.lower()
    if element == "p2p1":
        return FunctionSpace(mesh, ElementFamily.P2, components=2)
    if element == "mini":
        return FunctionSpace(mesh, ElementFamily.P1_BUBBLE, components=2)
    raise ValueError(f"unknown element pair {element!r}")


def pressure_space(mesh: Mesh) -> FunctionSpace:
    return FunctionSpace(mesh, ElementFamily.P1, components=1)


def all_tags(mesh: Mesh) -> tuple[BoundaryTag, ...]:
    return tuple(sorted(mesh.tags_present()))
