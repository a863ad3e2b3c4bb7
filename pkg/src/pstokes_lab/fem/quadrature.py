"""Quadrature rules on the reference triangle (area 1/2)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (nq, 3) and weights summing to the reference area 1/2."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def num_points(self) -> int:
        return len(self.weights)


def _sym3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _dunavant(degree):
    # weights normalised to sum 1
    if degree <= 1:
        pts, wts = [(1 / 3, 1 / 3, 1 / 3)], [1.0]
    elif degree == 2:
        pts, wts = _sym3(2 / 3, 1 / 6), [1 / 3] * 3
    elif degree <= 4:
        pts = _sym3(0.108103018168070, 0.445948490915965) + _sym3(0.816847572980459, 0.091576213509771)
        wts = [0.223381589678011] * 3 + [0.109951743655322] * 3
    else:
        pts = (
            [(1 / 3, 1 / 3, 1 / 3)]
            + _sym3(0.059715871789770, 0.470142064105115)
            + _sym3(0.797426985353087, 0.101286507323456)
        )
        wts = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    pts = np.array(pts, dtype=float)
    pts /= pts.sum(axis=1, keepdims=True)
    wts = np.array(wts, dtype=float)
    return pts, wts / wts.sum()


def _collapsed_gauss(degree):
    # Duffy map of a tensor Gauss-Legendre rule; exact to `degree`
    n = degree // 2 + 2
    g, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (g + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    l1 = S.ravel()
    l2 = (T * (1.0 - S)).ravel()
    wts = (WS * WT * (1.0 - S)).ravel() * 2.0
    pts = np.column_stack([1.0 - l1 - l2, l1, l2])
    return pts, wts / wts.sum()


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 5) -> QuadratureRule:
    """Positive-weight rule exact for polynomials up to ``degree``.

    Degrees up to 5 use the symmetric Dunavant rules; higher degrees fall back to
    a collapsed Gauss-Legendre product rule.
    """
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    pts, wts = _dunavant(degree) if degree <= 5 else _collapsed_gauss(degree)
    pts.setflags(write=False)
    wts = 0.5 * wts
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)
