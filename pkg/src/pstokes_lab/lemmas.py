"""Runtime checks of the norm and operator inequalities behind the eigenvalue bounds.

Lemma A relates divergence, strain rate and gradient of a discrete velocity;
Lemma B brackets the Newton operator between multiples of the Picard operator.
Every check returns the quantities it compares so callers can report slack.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem.assembly import (
    DEFAULT_QUAD_DEGREE,
    PhysicalParams,
    assemble_operator,
    cell_data,
    strain_rates,
    velocity_gradients,
)
from .fem.spaces import FunctionSpace


@dataclass
class LemmaA:
    div: float
    strain: float
    grad: float
    pointwise_ok: bool
    weighted_div: float
    weighted_strain: float

    def holds(self, rtol: float = 1e-10, d: int = 2) -> bool:
        return (
            self.div <= self.strain * (1 + rtol)
            and self.strain <= self.grad * (1 + rtol)
            and self.pointwise_ok
            and self.weighted_div <= np.sqrt(d) * self.weighted_strain * (1 + rtol)
        )


@dataclass
class LemmaB:
    newton: float
    picard: float
    upper: float
    p: float

    def holds(self, rtol: float = 1e-10) -> bool:
        scale = max(abs(self.picard), abs(self.upper), 1e-300)
        return (
            self.newton >= (self.p - 1.0) * self.picard - rtol * scale
            and self.newton <= self.picard + rtol * scale
            and self.picard <= self.upper + rtol * scale
        )


def lemma_a(v, space: FunctionSpace, nu_qp=None, degree: int = DEFAULT_QUAD_DEGREE, rtol: float = 1e-10) -> LemmaA:
    """``||div v|| <= ||Dv|| <= ||grad v||`` and ``(div v)^2 <= d |Dv|^2`` pointwise.

    The first inequality needs ``v`` to vanish on the boundary. ``nu_qp`` is an
    optional positive weight at quadrature points for the weighted variant.
    """
    cd = cell_data(space, degree)
    G = velocity_gradients(v, space, degree)
    D = strain_rates(v, space, degree)
    div = G[..., 0, 0] + G[..., 1, 1]
    d2 = np.einsum("...ij,...ij->...", D, D)
    g2 = np.einsum("...ij,...ij->...", G, G)
    nu = np.ones_like(div) if nu_qp is None else np.asarray(nu_qp)
    pointwise = bool(np.all(div**2 <= 2.0 * d2 * (1 + rtol) + 1e-300))
    return LemmaA(
        div=float(np.sqrt(np.sum(cd.wdet * div**2))),
        strain=float(np.sqrt(np.sum(cd.wdet * d2))),
        grad=float(np.sqrt(np.sum(cd.wdet * g2))),
        pointwise_ok=pointwise,
        weighted_div=float(np.sqrt(np.sum(cd.wdet * nu * div**2))),
        weighted_strain=float(np.sqrt(np.sum(cd.wdet * nu * d2))),
    )


def lemma_b(u_k, v, space: FunctionSpace, params: PhysicalParams, degree: int = DEFAULT_QUAD_DEGREE) -> LemmaB:
    """Quadratic forms ``v^T A_Newton v``, ``v^T A_Picard v`` and ``nu_max ||Dv||^2``."""
    A_n = assemble_operator(u_k, space, params, degree, gamma=1)
    A_p = assemble_operator(u_k, space, params, degree, gamma=0)
    cd = cell_data(space, degree)
    D = strain_rates(v, space, degree)
    upper = params.nu_max * float(np.sum(cd.wdet * np.einsum("...ij,...ij->...", D, D)))
    return LemmaB(newton=float(v @ (A_n @ v)), picard=float(v @ (A_p @ v)), upper=upper, p=params.p)

