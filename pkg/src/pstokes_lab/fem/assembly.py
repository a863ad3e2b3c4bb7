"""Cell-wise assembly of the linearized p-Stokes operators.

All integrals are evaluated with one triangle quadrature rule per call; the
viscosity is sampled at the quadrature points of the current velocity iterate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .elements import tabulate
from .quadrature import triangle_rule
from .spaces import FunctionSpace

DEFAULT_QUAD_DEGREE = 5


class SingularViscosityError(ValueError):
    """Viscosity is infinite: zero regularization at a point of zero strain rate."""


@dataclass(frozen=True)
class PhysicalParams:
    """Material and forcing parameters of the regularized power law.

    ``body_force(x, y, params)`` returns an array with trailing axis 2; when
    omitted the force is the constant ``rho * gravity``.
    """

    nu0: float = 1.0
    p: float = 4.0 / 3.0
    eps: float = 1e-2
    gamma: int = 1
    rho: float = 910.0
    gravity: tuple[float, float] = (0.0, -9.81)
    body_force: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError(f"power-law exponent must lie in (1, 2], got {self.p}")
        if self.gamma not in (0, 1):
            raise ValueError("gamma must be 0 (Picard) or 1 (Newton)")
        if self.eps < 0:
            raise ValueError("regularization must be non-negative")
        if self.nu0 <= 0:
            raise ValueError("nu0 must be positive")
        if self.newton_factor <= 0:
            raise ValueError("1 + gamma*(p - 2) must be positive")

    @property
    def newton_factor(self) -> float:
        return 1.0 + self.gamma * (self.p - 2.0)

    @property
    def nu_max(self) -> float:
        """Viscosity at zero strain rate."""
        if self.p == 2.0:
            return self.nu0
        if self.eps == 0:
            return np.inf
        return self.nu0 * self.eps ** (self.p - 2.0)

    def force(self, x, y) -> np.ndarray:
        if self.body_force is not None:
            return np.asarray(self.body_force(x, y, self), dtype=float)
        g = self.rho * np.asarray(self.gravity, dtype=float)
        return np.broadcast_to(g, np.shape(x) + (2,)).copy()

    def replace(self, **kw) -> "PhysicalParams":
        from dataclasses import replace

        return replace(self, **kw)


def viscosity(Du: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """``nu0 * (eps^2 + |Du|^2)^((p-2)/2)`` for symmetric tensors with trailing shape (2, 2)."""
    Du = np.asarray(Du, dtype=float)
    norm2 = np.einsum("...ij,...ij->...", Du, Du)
    if params.p == 2.0:
        return np.full(norm2.shape, params.nu0)
    base = params.eps**2 + norm2
    if np.any(base == 0.0):
        raise SingularViscosityError("eps = 0 and Du = 0: viscosity is unbounded")
    return params.nu0 * base ** ((params.p - 2.0) / 2.0)


def _newton_weight(Du: np.ndarray, params: PhysicalParams) -> np.ndarray:
    norm2 = np.einsum("...ij,...ij->...", Du, Du)
    base = params.eps**2 + norm2
    if np.any(base == 0.0):
        raise SingularViscosityError("eps = 0 and Du = 0: Newton term is unbounded")
    return params.gamma * (params.p - 2.0) * params.nu0 * base ** ((params.p - 4.0) / 2.0)


class CellData:
    """Geometry and basis tabulation of one space for one quadrature rule."""

    def __init__(self, space: FunctionSpace, degree: int):
        mesh = space.mesh
        rule = triangle_rule(degree)
        v = mesh.vertices[mesh.cells]  # (M, 3, 2)
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1] / det
        Jinv[:, 1, 1] = J[:, 0, 0] / det
        Jinv[:, 0, 1] = -J[:, 0, 1] / det
        Jinv[:, 1, 0] = -J[:, 1, 0] / det
        glam = np.empty((mesh.num_cells, 3, 2))
        glam[:, 1:] = Jinv
        glam[:, 0] = -Jinv[:, 0] - Jinv[:, 1]
        self.rule = rule
        self.det = np.abs(det)
        self.wdet = self.det[:, None] * rule.weights[None, :]  # (M, nq)
        self.points = np.einsum("qa,cak->cqk", rule.points, v)  # (M, nq, 2)
        vals, dvals = tabulate(space.family, rule.points)
        self.values = vals  # (nq, nb)
        self.grads = np.einsum("qba,cak->cqbk", dvals, glam)  # (M, nq, nb, 2)


def cell_data(space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> CellData:
    cache = space.__dict__.setdefault("_cell_data", {})
    if degree not in cache:
        cache[degree] = CellData(space, degree)
    return cache[degree]


def _sym_grad_basis(space: FunctionSpace, cd: CellData) -> np.ndarray:
    """Strain-rate tensors of the local vector basis, shape (M, nq, 2*nb, 2, 2)."""
    M, nq, nb, _ = cd.grads.shape
    D = np.zeros((M, nq, 2 * nb, 2, 2))
    for c in range(2):
        sl = slice(c * nb, (c + 1) * nb)
        D[:, :, sl, c, :] += 0.5 * cd.grads
        D[:, :, sl, :, c] += 0.5 * cd.grads
    return D


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    mat = sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape).tocsr()
    mat.sum_duplicates()
    return mat


def _scatter_vec(local: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, rows.ravel(), local.ravel())
    return out


def strain_rates(u: np.ndarray, space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Du of the discrete velocity at every quadrature point, shape (M, nq, 2, 2)."""
    cd = cell_data(space, degree)
    dofs = space.vector_cell_dofs()
    D = _sym_grad_basis(space, cd)
    return np.einsum("cqaij,ca->cqij", D, np.asarray(u)[dofs])


def velocity_gradients(u: np.ndarray, space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Full gradient ``G[i, j] = d u_i / d x_j`` at quadrature points, shape (M, nq, 2, 2)."""
    cd = cell_data(space, degree)
    nb = space.num_basis
    loc = np.asarray(u)[space.vector_cell_dofs()]
    G = np.empty(cd.grads.shape[:2] + (2, 2))
    for c in range(2):
        G[:, :, c, :] = np.einsum("cqbk,cb->cqk", cd.grads, loc[:, c * nb:(c + 1) * nb])
    return G


def velocity_values(u: np.ndarray, space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    cd = cell_data(space, degree)
    nb = space.num_basis
    loc = np.asarray(u)[space.vector_cell_dofs()]
    return np.stack([loc[:, c * nb:(c + 1) * nb] @ cd.values.T for c in range(2)], axis=-1)


def scalar_values(q: np.ndarray, space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    cd = cell_data(space, degree)
    return np.asarray(q)[space.cell_dofs] @ cd.values.T


def qp_viscosity(u_k, space, params, degree=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    return viscosity(strain_rates(u_k, space, degree), params)


def assemble_operator(
    u_k: np.ndarray,
    space: FunctionSpace,
    params: PhysicalParams,
    degree: int = DEFAULT_QUAD_DEGREE,
    gamma: int | None = None,
) -> sp.csr_matrix:
    """Linearized viscous operator at ``u_k`` (Picard for gamma=0, Newton for gamma=1).

    ``gamma`` overrides ``params.gamma`` when given.
    """
    u_k = np.asarray(u_k, dtype=float)
    if u_k.shape != (space.dim,):
        raise ValueError(f"velocity vector has shape {u_k.shape}, expected ({space.dim},)")
    if gamma is not None and gamma != params.gamma:
        params = params.replace(gamma=gamma)
    cd = cell_data(space, degree)
    dofs = space.vector_cell_dofs()
    D = _sym_grad_basis(space, cd)
    Du = np.einsum("cqaij,ca->cqij", D, u_k[dofs])
    nu = viscosity(Du, params)
    K = np.einsum("cq,cqaij,cqbij->cab", cd.wdet * nu, D, D)
    if params.gamma * (params.p - 2.0) != 0.0:
        kappa = _newton_weight(Du, params)
        proj = np.einsum("cqij,cqaij->cqa", Du, D)
        K += np.einsum("cq,cqa,cqb->cab", cd.wdet * kappa, proj, proj)
    K = 0.5 * (K + K.transpose(0, 2, 1))
    return _scatter(K, dofs, dofs, (space.dim, space.dim))


def assemble_vector_laplacian(space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> sp.csr_matrix:
    """Gram matrix of the gradient seminorm ``(grad u, grad v)`` on a vector space."""
    cd = cell_data(space, degree)
    k = np.einsum("cq,cqak,cqbk->cab", cd.wdet, cd.grads, cd.grads)
    k = 0.5 * (k + k.transpose(0, 2, 1))
    nb = space.num_basis
    K = np.zeros((k.shape[0], 2 * nb, 2 * nb))
    K[:, :nb, :nb] = k
    K[:, nb:, nb:] = k
    dofs = space.vector_cell_dofs()
    return _scatter(K, dofs, dofs, (space.dim, space.dim))


def assemble_divergence(
    space_v: FunctionSpace, space_q: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE
) -> sp.csr_matrix:
    """``B[i, j] = -(psi_i, div phi_j)``, shape (m, n)."""
    cdv = cell_data(space_v, degree)
    cdq = cell_data(space_q, degree)
    div = np.concatenate([cdv.grads[..., 0], cdv.grads[..., 1]], axis=2)  # (M, nq, 2nb)
    Bl = -np.einsum("cq,qa,cqb->cab", cdv.wdet, cdq.values, div)
    return _scatter(Bl, space_q.cell_dofs, space_v.vector_cell_dofs(), (space_q.dim, space_v.dim))


def _weighted_mass(space_q: FunctionSpace, weight: np.ndarray | None, degree: int) -> sp.csr_matrix:
    cd = cell_data(space_q, degree)
    w = cd.wdet if weight is None else cd.wdet * weight
    Ml = np.einsum("cq,qa,qb->cab", w, cd.values, cd.values)
    Ml = 0.5 * (Ml + Ml.transpose(0, 2, 1))
    return _scatter(Ml, space_q.cell_dofs, space_q.cell_dofs, (space_q.dim, space_q.dim))


def assemble_mass(space_q: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> sp.csr_matrix:
    return _weighted_mass(space_q, None, degree)


def assemble_scaled_mass(
    space_q: FunctionSpace,
    u_k: np.ndarray,
    space_v: FunctionSpace,
    params: PhysicalParams,
    degree: int = DEFAULT_QUAD_DEGREE,
) -> sp.csr_matrix:
    """Pressure mass matrix weighted by ``1/nu(u_k)``."""
    if space_q.mesh is not space_v.mesh:
        raise ValueError("pressure and velocity spaces must share the mesh")
    nu = qp_viscosity(u_k, space_v, params, degree)
    return _weighted_mass(space_q, 1.0 / nu, degree)


def pressure_functional(space_q: FunctionSpace, weight=None, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """Vector ``r_i = (psi_i, weight)``; ``weight`` is an array at quadrature points."""
    cd = cell_data(space_q, degree)
    w = cd.wdet if weight is None else cd.wdet * weight
    local = np.einsum("cq,qa->ca", w, cd.values)
    return _scatter_vec(local, space_q.cell_dofs, space_q.dim)


def assemble_load(space: FunctionSpace, params: PhysicalParams, degree: int = DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``(f, phi_i)`` for the vector basis."""
    cd = cell_data(space, degree)
    f = params.force(cd.points[..., 0], cd.points[..., 1])  # (M, nq, 2)
    loc = np.concatenate(
        [np.einsum("cq,cq,qa->ca", cd.wdet, f[..., c], cd.values) for c in range(2)], axis=1
    )
    return _scatter_vec(loc, space.vector_cell_dofs(), space.dim)


def viscous_residual(
    u_k: np.ndarray, space: FunctionSpace, params: PhysicalParams, degree: int = DEFAULT_QUAD_DEGREE
) -> np.ndarray:
    """``a(u_k)(phi_i) = (nu(Du_k) Du_k, D phi_i)``."""
    cd = cell_data(space, degree)
    dofs = space.vector_cell_dofs()
    D = _sym_grad_basis(space, cd)
    Du = np.einsum("cqaij,ca->cqij", D, np.asarray(u_k)[dofs])
    nu = viscosity(Du, params)
    loc = np.einsum("cq,cqij,cqaij->ca", cd.wdet * nu, Du, D)
    return _scatter_vec(loc, dofs, space.dim)


def assemble_rhs(u_k, p_k, space_v, space_q, params, B=None, degree: int = DEFAULT_QUAD_DEGREE):
    """Residuals of the nonlinear weak form at ``(u_k, p_k)``.

    Returns ``F = (f, phi) - a(u_k)(phi) - B^T p_k`` and ``G = -B u_k``; natural
    boundary terms are omitted (stress-free). Constraints are not applied here.
    """
    if B is None:
        B = assemble_divergence(space_v, space_q, degree)
    F = assemble_load(space_v, params, degree) - viscous_residual(u_k, space_v, params, degree) - B.T @ p_k
    G = -(B @ u_k)
    return F, G


def strain_rate_maxnorm(u_k, space: FunctionSpace, degree: int = DEFAULT_QUAD_DEGREE) -> float:
    """Maximum of ``|Du_k|`` over all quadrature points."""
    Du = strain_rates(u_k, space, degree)
    return float(np.sqrt(np.einsum("...ij,...ij->...", Du, Du).max()))
