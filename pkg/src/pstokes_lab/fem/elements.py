"""Scalar Lagrange bases on triangles in barycentric form.

Local ordering: vertices 0, 1, 2; for P2 then the edge midpoints of edges
(1,2), (2,0), (0,1); for the bubble-enriched P1 the bubble comes last.
"""
from __future__ import annotations

import enum

import numpy as np


class ElementFamily(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P1_BUBBLE = "P1Bubble"

    @property
    def num_basis(self) -> int:
        return {ElementFamily.P1: 3, ElementFamily.P2: 6, ElementFamily.P1_BUBBLE: 4}[self]

    @property
    def degree(self) -> int:
        """Polynomial degree of the basis (the bubble is cubic)."""
        return {ElementFamily.P1: 1, ElementFamily.P2: 2, ElementFamily.P1_BUBBLE: 3}[self]


LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))
BUBBLE_SCALE = 27.0


def tabulate(family: ElementFamily, bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Basis values (nq, nb) and barycentric derivatives (nq, nb, 3).

    Physical gradients follow as ``sum_a dN/dlambda_a * grad(lambda_a)``.
    """
    L = np.atleast_2d(np.asarray(bary, dtype=float))
    nq = L.shape[0]
    nb = family.num_basis
    vals = np.zeros((nq, nb))
    dvals = np.zeros((nq, nb, 3))
    if family in (ElementFamily.P1, ElementFamily.P1_BUBBLE):
        vals[:, :3] = L
        for a in range(3):
            dvals[:, a, a] = 1.0
        if family is ElementFamily.P1_BUBBLE:
            vals[:, 3] = BUBBLE_SCALE * L[:, 0] * L[:, 1] * L[:, 2]
            dvals[:, 3, 0] = BUBBLE_SCALE * L[:, 1] * L[:, 2]
            dvals[:, 3, 1] = BUBBLE_SCALE * L[:, 0] * L[:, 2]
            dvals[:, 3, 2] = BUBBLE_SCALE * L[:, 0] * L[:, 1]
    elif family is ElementFamily.P2:
        for a in range(3):
            vals[:, a] = L[:, a] * (2.0 * L[:, a] - 1.0)
            dvals[:, a, a] = 4.0 * L[:, a] - 1.0
        for e, (i, j) in enumerate(LOCAL_EDGES):
            vals[:, 3 + e] = 4.0 * L[:, i] * L[:, j]
            dvals[:, 3 + e, i] = 4.0 * L[:, j]
            dvals[:, 3 + e, j] = 4.0 * L[:, i]
    else:  # pragma: no cover
        raise ValueError(f"unknown element family {family}")
    return vals, dvals


def reference_nodes(family: ElementFamily) -> np.ndarray:
    """Barycentric coordinates of the nodal points (bubble: barycentre)."""
    verts = np.eye(3)
    if family is ElementFamily.P1:
        return verts
    if family is ElementFamily.P2:
        mids = np.array([(verts[i] + verts[j]) / 2 for i, j in LOCAL_EDGES])
        return np.vstack([verts, mids])
    return np.vstack([verts, np.full((1, 3), 1.0 / 3.0)])
