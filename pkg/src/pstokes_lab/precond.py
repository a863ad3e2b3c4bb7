"""Left block-triangular preconditioner and GMRES for the saddle-point system."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem.boundary import AssembledSystem, project_out_constant

log = logging.getLogger(__name__)

DEFAULT_RESTART = 200
DEFAULT_MAX_ITERS = 2000


class FactorizationError(RuntimeError):
    """Matrix could not be factorized as symmetric positive definite."""


class SPDFactor:
    """Sparse symmetric factorization ``P A P^T = L D L^T`` of an SPD matrix.

    Backed by SuperLU with a symmetric fill-reducing ordering and pivoting
    disabled, so the U factor's diagonal is the ``D`` of the LDL^T
    decomposition; a non-positive entry means ``A`` is not SPD.
    """

    def __init__(self, A: sp.spmatrix):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise FactorizationError("matrix must be square")
        try:
            self._lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise FactorizationError(str(exc)) from exc
        d = self._lu.U.diagonal()
        if not np.all(d > 0):
            raise FactorizationError("matrix is not positive definite")
        self.shape = A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    __call__ = solve


@dataclass
class KrylovReport:
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False


class BlockPreconditioner:
    """``P = [[A~, 0], [B, -S~]]`` applied through exact factorizations of
    ``A~`` and ``S~``.

    When ``project_constant`` is set, the constant pressure mode is removed
    from every pressure output (L2-orthogonally when ``mass`` is given).
    """

    def __init__(self, A, B, S_tilde, project_constant: bool = False, mass=None):
        self.A_solver = A if isinstance(A, SPDFactor) else SPDFactor(A)
        self.S_solver = S_tilde if isinstance(S_tilde, SPDFactor) else SPDFactor(S_tilde)
        self.B = sp.csr_matrix(B)
        self.project_constant = project_constant
        self.mass = mass
        self.n = self.B.shape[1]
        self.m = self.B.shape[0]

    def apply(self, r_u: np.ndarray, r_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z_u = self.A_solver.solve(r_u)
        z_p = self.S_solver.solve(self.B @ z_u - r_p)
        if self.project_constant:
            z_p = project_out_constant(z_p, self.mass)
        return z_u, z_p

    def matvec(self, r: np.ndarray) -> np.ndarray:
        z_u, z_p = self.apply(r[: self.n], r[self.n:])
        return np.concatenate([z_u, z_p])

    def as_operator(self) -> spla.LinearOperator:
        N = self.n + self.m
        return spla.LinearOperator((N, N), matvec=self.matvec, dtype=float)


def apply_preconditioner(pc: BlockPreconditioner, r_u, r_p):
    return pc.apply(np.asarray(r_u, dtype=float), np.asarray(r_p, dtype=float))


def make_preconditioner(system: AssembledSystem, schur: str = "mnu") -> BlockPreconditioner:
    """Exact-``A`` preconditioner with ``S~ = M`` (``"m"``) or ``S~ = M_nu`` (``"mnu"``)."""
    schur = schur.lower()
    if schur == "m":
        S = system.M
    elif schur == "mnu":
        S = system.M_nu
    else:
        raise ValueError(f"unknown Schur approximation {schur!r}")
    return BlockPreconditioner(system.A, system.B, S, project_constant=system.pressure_kernel, mass=system.M)


def gmres_solve(
    system: AssembledSystem,
    pc: BlockPreconditioner,
    tol: float = 1e-10,
    restart: int = DEFAULT_RESTART,
    max_iters: int = DEFAULT_MAX_ITERS,
):
    """Left-preconditioned restarted GMRES on the assembled saddle-point system.

    Runs SciPy's GMRES on ``P^-1 K x = P^-1 b``, so ``tol`` bounds the
    preconditioned relative residual. Returns ``(du, dp, KrylovReport)``.
    """
    n, m = system.n, system.m
    K = system.matrix()
    b = system.rhs()
    if system.pressure_kernel:
        b[n:] = b[n:] - b[n:].mean()
    Pinv = pc.as_operator()
    pb = Pinv.matvec(b)
    pb_norm = np.linalg.norm(pb)
    if pb_norm == 0.0:
        return np.zeros(n), np.zeros(m), KrylovReport(0, 0.0, True)

    op = spla.LinearOperator(K.shape, matvec=lambda x: Pinv.matvec(K @ x), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    restart = min(restart, max_iters)
    cycles = int(np.ceil(max_iters / restart))
    x, info = spla.gmres(
        op, pb, rtol=tol, atol=0.0, restart=restart, maxiter=cycles, callback=cb, callback_type="pr_norm"
    )
    res = np.linalg.norm(pb - op.matvec(x)) / pb_norm
    du, dp = x[:n], x[n:]
    if system.pressure_kernel:
        dp = project_out_constant(dp, system.M)
    report = KrylovReport(count[0], float(res), bool(info == 0 and res <= tol * 1.01), breakdown=info < 0)
    if not report.converged:
        log.warning("GMRES stopped after %d iterations, residual %.3e", count[0], res)
    return du, dp, report


def direct_solve(system: AssembledSystem) -> tuple[np.ndarray, np.ndarray]:
    """Sparse direct solution of the full system; the pressure kernel, if any, is
    removed by bordering with the L2-mean functional."""
    n, m = system.n, system.m
    K = system.matrix()
    b = system.rhs()
    if system.pressure_kernel:
        b[n:] = b[n:] - b[n:].mean()
        w = np.concatenate([np.zeros(n), system.M @ np.ones(m)])
        K = sp.bmat([[K, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]], format="csc")
        b = np.concatenate([b, [0.0]])
    x = spla.spsolve(sp.csc_matrix(K), b)
    return x[:n], x[n:n + m]
