"""Low-regularity manufactured solution for the p-Stokes problem on [-1, 1]^2.

Velocity ``u = r^(a-1) (y, -x)`` and pressure ``pi = r^b`` with ``a = 1 + delta``
and ``b = -1 + 2/p + delta``. The rotational velocity is divergence free for
every ``a``; its strain rate is radial, ``|Du| = (a-1) r^(a-1) / sqrt(2)``, which
gives the body force in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem.assembly import PhysicalParams


class SingularPointError(ValueError):
    """Evaluation at the origin where a negative power of r is needed."""


@dataclass(frozen=True)
class ManufacturedSolution:
    delta: float = 0.01
    p: float = 4.0 / 3.0
    a_override: float | None = None
    b_override: float | None = None

    def __post_init__(self):
        if self.a_override is None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.a <= 1.0 and self.a_override is None:
            raise ValueError("velocity exponent a must exceed 1")

    @property
    def a(self) -> float:
        return 1.0 + self.delta if self.a_override is None else self.a_override

    @property
    def b(self) -> float:
        return -1.0 + 2.0 / self.p + self.delta if self.b_override is None else self.b_override

    def velocity(self, x, y):
        return ms_velocity(x, y, self)

    def gradient(self, x, y):
        return ms_velocity_gradient(x, y, self)

    def pressure(self, x, y):
        return ms_pressure(x, y, self)


def _radius(x, y, need_positive: bool):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    if need_positive and np.any(r == 0.0):
        raise SingularPointError("manufactured solution evaluated at the origin")
    return x, y, r


def ms_velocity(x, y, ms: ManufacturedSolution) -> np.ndarray:
    x, y, r = _radius(x, y, ms.a < 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(r > 0, r ** (ms.a - 1.0), 0.0 if ms.a > 1.0 else 1.0)
    return np.stack([s * y, -s * x], axis=-1)


def ms_pressure(x, y, ms: ManufacturedSolution) -> np.ndarray:
    x, y, r = _radius(x, y, ms.b < 0.0)
    with np.errstate(divide="ignore"):
        return np.where(r > 0, r**ms.b, 0.0 if ms.b > 0 else 1.0)


def ms_exact(x, y, ms: ManufacturedSolution):
    """(velocity with trailing axis 2, pressure) at the given points."""
    return ms_velocity(x, y, ms), ms_pressure(x, y, ms)


def ms_velocity_gradient(x, y, ms: ManufacturedSolution) -> np.ndarray:
    """``G[..., i, j] = d u_i / d x_j``."""
    x, y, r = _radius(x, y, ms.a < 3.0)
    al = ms.a - 1.0
    s = r**al
    t = al * r ** (al - 2.0)
    G = np.empty(np.shape(x) + (2, 2))
    G[..., 0, 0] = t * x * y
    G[..., 0, 1] = s + t * y * y
    G[..., 1, 0] = -s - t * x * x
    G[..., 1, 1] = -t * x * y
    return G


def ms_body_force(x, y, ms: ManufacturedSolution, params: PhysicalParams) -> np.ndarray:
    """``f = grad(pi) - div(nu(Du) Du)`` for the manufactured fields.

    With ``Du = (alpha/2) r^alpha R(theta)``, ``R = [[sin 2t, -cos 2t], [-cos 2t, -sin 2t]]``,
    the stress is ``g(r) R`` and ``div(g R) = (g' + 2 g / r) (sin t, -cos t)``.
    """
    x, y, r = _radius(x, y, True)
    al = ms.a - 1.0
    nu0, p, eps = params.nu0, params.p, params.eps
    cos_t, sin_t = x / r, y / r
    q = eps**2 + 0.5 * al**2 * r ** (2 * al)
    dq = al**3 * r ** (2 * al - 1.0)
    beta = 0.5 * (p - 2.0)
    c = 0.5 * al * nu0
    g = c * r**al * q**beta
    dg = c * (al * r ** (al - 1.0) * q**beta + r**al * beta * q ** (beta - 1.0) * dq)
    div_s = dg + 2.0 * g / r
    dpi = ms.b * r ** (ms.b - 1.0)
    fx = dpi * cos_t - div_s * sin_t
    fy = dpi * sin_t + div_s * cos_t
    return np.stack([fx, fy], axis=-1)


def ms_stress(x, y, ms: ManufacturedSolution, params: PhysicalParams) -> np.ndarray:
    """``S = nu(Du) Du`` evaluated from the analytic gradient (used by oracles)."""
    G = ms_velocity_gradient(x, y, ms)
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    n2 = np.einsum("...ij,...ij->...", D, D)
    nu = params.nu0 * (params.eps**2 + n2) ** ((params.p - 2.0) / 2.0)
    return nu[..., None, None] * D


def ms_params(ms: ManufacturedSolution, params: PhysicalParams) -> PhysicalParams:
    """Copy of ``params`` whose body force is the manufactured forcing."""

    def force(x, y, current):
        return ms_body_force(x, y, ms, current)

    return params.replace(p=ms.p, body_force=force)
