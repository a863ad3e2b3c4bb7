"""Dense Schur-complement spectra, eigenvalue bounds and inf-sup constants."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fem.assembly import (
    PhysicalParams,
    assemble_operator,
    assemble_vector_laplacian,
    pressure_functional,
    qp_viscosity,
    strain_rate_maxnorm,
)
from .precond import SPDFactor

DENSE_CAP = 4000
KERNEL_RTOL = 1e-10


class DenseCapExceeded(ValueError):
    pass


class NotSPDError(ValueError):
    pass


@dataclass
class SpectralReport:
    eps: float
    lambda_min_nonzero: float
    lambda_max: float
    bound_lower: float
    bound_upper: float
    c0: float
    c_nu: float
    max_strain: float
    method: str
    element: str
    schur_choice: str

    def as_dict(self) -> dict:
        return asdict(self)

    def contained(self, rtol: float = 1e-6) -> bool:
        return (
            self.lambda_min_nonzero >= self.bound_lower * (1.0 - rtol)
            and self.lambda_max <= self.bound_upper * (1.0 + rtol)
        )


def schur_complement(A, B, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """Dense ``S = B A^-1 B^T`` from one sparse factorization of ``A``; symmetrized."""
    m = B.shape[0]
    if m > dense_cap:
        raise DenseCapExceeded(f"pressure dimension {m} exceeds dense cap {dense_cap}")
    factor = A if isinstance(A, SPDFactor) else SPDFactor(A)
    Bt = B.T.toarray() if sp.issparse(B) else np.asarray(B).T
    X = factor.solve(np.asfortranarray(Bt))
    S = np.asarray(B @ X)
    return 0.5 * (S + S.T)


def _deflation_basis(m: int, deflation) -> np.ndarray | None:
    if deflation is None:
        return None
    C = np.atleast_2d(np.asarray(deflation, dtype=float))
    if C.shape[1] != m:
        C = C.T
    if C.size == 0:
        return None
    if np.linalg.matrix_rank(C) < C.shape[0]:
        raise ValueError("deflation vectors are linearly dependent")
    return la.null_space(C)


def generalized_eigs(S, S_tilde, deflation=None) -> np.ndarray:
    """Ascending eigenvalues of ``S x = lambda S~ x`` with ``x`` restricted to
    ``{x : c^T x = 0 for c in deflation}``.

    The pencil is reduced with a Cholesky factor of ``S~`` and solved as a dense
    symmetric eigenproblem.
    """
    S = np.asarray(S.toarray() if sp.issparse(S) else S, dtype=float)
    St = np.asarray(S_tilde.toarray() if sp.issparse(S_tilde) else S_tilde, dtype=float)
    if not np.allclose(St, St.T, rtol=1e-12, atol=0.0):
        raise NotSPDError("S~ is not symmetric")
    Z = _deflation_basis(S.shape[0], deflation)
    if Z is not None:
        S = Z.T @ S @ Z
        St = Z.T @ St @ Z
    S = 0.5 * (S + S.T)
    St = 0.5 * (St + St.T)
    try:
        L = la.cholesky(St, lower=True)
    except la.LinAlgError as exc:
        raise NotSPDError("S~ is not positive definite") from exc
    Y = la.solve_triangular(L, S, lower=True)
    C = la.solve_triangular(L, Y.T, lower=True)
    C = 0.5 * (C + C.T)
    return np.sort(la.eigvalsh(C))


def smallest_nonzero(eigs: np.ndarray, rtol: float = KERNEL_RTOL) -> float:
    eigs = np.asarray(eigs)
    cut = rtol * eigs.max()
    nz = eigs[eigs >= cut]
    return float(nz.min()) if nz.size else 0.0


def kernel_deflation(S_tilde, pressure_kernel: bool):
    """Constraint that removes the constant pressure mode: ``(S~ 1)^T x = 0``."""
    if not pressure_kernel:
        return None
    return np.asarray(S_tilde @ np.ones(S_tilde.shape[0]))[None, :]


def theoretical_bounds(params: PhysicalParams, c0: float, c_nu: float, max_strain: float, schur_choice: str, d: int = 2):
    """Eigenvalue bounds of ``S~^-1 S`` for ``S~ = M`` or ``S~ = M_nu``."""
    fac = params.newton_factor
    choice = schur_choice.lower()
    if choice == "m":
        p = params.p
        lower = c0**2 * params.eps ** (2.0 - p) / params.nu0 if p != 2.0 else c0**2 / params.nu0
        upper = (params.eps**2 + max_strain**2) ** ((2.0 - p) / 2.0) / (params.nu0 * fac)
        return lower, upper
    if choice == "mnu":
        return c_nu**2, d / fac
    raise ValueError(f"unknown Schur approximation {schur_choice!r}")


def infsup_constant(K_V, B, M_Q, deflation=None) -> float:
    """``sqrt(lambda_min)`` of ``B K_V^-1 B^T q = lambda M_Q q`` on the deflated space."""
    S = schur_complement(K_V, B)
    eigs = generalized_eigs(S, M_Q, deflation)
    return float(np.sqrt(max(eigs[0], 0.0)))


def _restrict(system, K):
    """Rotate (if needed) and restrict a velocity matrix to the free dofs."""
    if system.T is not None:
        K = system.T.T @ K @ system.T
    free = system.free
    K = sp.csr_matrix(K)[free][:, free]
    return 0.5 * (K + K.T)


def c0_constant(problem, system=None) -> float:
    """Classical inf-sup constant in the gradient / L2 norms for this problem."""
    cache = problem.__dict__.setdefault("_c0_cache", {})
    if "c0" in cache:
        return cache["c0"]
    if system is None:
        system = problem.assemble(problem.initial_velocity(), np.zeros(problem.Q.dim))
    K = _restrict(system, assemble_vector_laplacian(problem.V, problem.quad_degree))
    Bf = system.B[:, system.free]
    defl = kernel_deflation(problem.M, problem.pressure_kernel)
    cache["c0"] = infsup_constant(K, Bf, problem.M, defl)
    return cache["c0"]


def cnu_deflation(problem, u, params, mode: str = "both"):
    """Constraints for the weighted inf-sup constant.

    ``mode="both"``: ``(q, 1/nu) = 0`` and ``(q, nu^-1/2) = 0``;
    ``mode="kernel"``: only ``(q, 1/nu) = 0``. Without a pressure kernel
    no constraint is imposed. The two functionals coincide up to scale for
    constant viscosity, so an orthonormal basis of their span is returned.
    """
    if not problem.pressure_kernel:
        return None
    nu = qp_viscosity(u, problem.V, params, problem.quad_degree)
    vecs = [pressure_functional(problem.Q, 1.0 / nu, problem.quad_degree)]
    if mode == "both":
        vecs.append(pressure_functional(problem.Q, nu**-0.5, problem.quad_degree))
    elif mode != "kernel":
        raise ValueError(f"unknown deflation mode {mode!r}")
    C = np.array(vecs)
    return la.orth((C / np.linalg.norm(C, axis=1, keepdims=True)).T, rcond=1e-10).T


def cnu_constant(problem, u, system, params=None, mode: str = "both") -> float:
    """Weighted inf-sup constant with ``||nu^1/2 Du||`` and ``||nu^-1/2 q||``."""
    params = problem.params if params is None else params
    K = _restrict(system, assemble_operator(u, problem.V, params, problem.quad_degree, gamma=0))
    Bf = system.B[:, system.free]
    return infsup_constant(K, Bf, system.M_nu, cnu_deflation(problem, u, params, mode))


def analyze_state(
    problem,
    u,
    p,
    method: str,
    schur_choices=("m", "mnu"),
    cnu_mode: str = "both",
    return_eigs: bool = False,
):
    """Spectra of ``S~^-1 S`` at the iterate ``(u, p)`` with the linearization of
    ``method``, plus both inf-sup constants and the theoretical bounds."""
    gamma = {"picard": 0, "newton": 1}[method]
    params = problem.params.replace(gamma=gamma)
    system = problem.assemble(u, p, gamma=gamma)
    free = system.free
    Af = system.A[free][:, free]
    Bf = system.B[:, free]
    S = schur_complement(Af, Bf)
    c0 = c0_constant(problem, system)
    c_nu = cnu_constant(problem, u, system, params, cnu_mode)
    strain = strain_rate_maxnorm(u, problem.V, problem.quad_degree)
    reports, spectra = [], {}
    for choice in schur_choices:
        St = system.M if choice == "m" else system.M_nu
        eigs = generalized_eigs(S, St, kernel_deflation(St, problem.pressure_kernel))
        lo, hi = theoretical_bounds(params, c0, c_nu, strain, choice)
        reports.append(
            SpectralReport(
                eps=params.eps,
                lambda_min_nonzero=smallest_nonzero(eigs),
                lambda_max=float(eigs.max()),
                bound_lower=lo,
                bound_upper=hi,
                c0=c0,
                c_nu=c_nu,
                max_strain=strain,
                method=method,
                element=problem.element,
                schur_choice=choice,
            )
        )
        spectra[choice] = eigs
    return (reports, spectra) if return_eigs else reports


def spectral_sweep(problem, eps_list, schur_choices=("m", "mnu"), method: str = "newton", config=None, cnu_mode="both"):
    """Solve to convergence for each regularization and analyse the final iterate.

    Returns ``(reports, states)``; ``reports`` is ordered by eps then Schur choice.
    """
    from .solver import SolverConfig, nonlinear_solve

    config = SolverConfig(method=method) if config is None else config
    reports, states = [], []
    for eps in eps_list:
        prob = problem.with_params(problem.params.replace(eps=float(eps), gamma={"picard": 0, "newton": 1}[method]))
        state = nonlinear_solve(prob, config)
        reports.extend(analyze_state(prob, state.u, state.p, method, schur_choices, cnu_mode))
        states.append(state)
    return reports, states
