"""Picard and Newton iterations for the regularized p-Stokes problem."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fem.assembly import (
    DEFAULT_QUAD_DEGREE,
    PhysicalParams,
    assemble_divergence,
    assemble_mass,
    assemble_operator,
    assemble_rhs,
    assemble_scaled_mass,
    cell_data,
    scalar_values,
    velocity_gradients,
)
from .fem.boundary import (
    AssembledSystem,
    BoundaryConditions,
    apply_constraints,
    dirichlet_data,
    project_out_constant,
    rotate_slip_dofs,
)
from .fem.spaces import pressure_space, velocity_space
from .mesh import Mesh
from .precond import KrylovReport, direct_solve, gmres_solve, make_preconditioner

log = logging.getLogger(__name__)

METHODS = {"picard": 0, "newton": 1}


class LinearSolverError(RuntimeError):
    pass


class StokesProblem:
    """Mesh, element pair, material parameters and boundary conditions.

    ``element`` is ``"p2p1"`` (Taylor-Hood) or ``"mini"``.
    """

    def __init__(
        self,
        mesh: Mesh,
        element: str,
        params: PhysicalParams,
        bcs: BoundaryConditions,
        quad_degree: int = DEFAULT_QUAD_DEGREE,
    ):
        self.mesh = mesh
        self.element = element.lower()
        self.params = params
        self.bcs = bcs
        self.quad_degree = quad_degree
        self.V = velocity_space(mesh, self.element)
        self.Q = pressure_space(mesh)
        self.pressure_kernel = bcs.pressure_has_kernel(mesh)
        self.dirichlet_dofs, self.dirichlet_values = dirichlet_data(self.V, bcs)
        self._B = None
        self._M = None

    def with_params(self, params: PhysicalParams) -> "StokesProblem":
        """Same discretization, new parameters; cached geometry is shared."""
        other = object.__new__(StokesProblem)
        other.__dict__.update(self.__dict__)
        other.params = params
        return other

    @property
    def B(self):
        if self._B is None:
            self._B = assemble_divergence(self.V, self.Q, self.quad_degree)
        return self._B

    @property
    def M(self):
        if self._M is None:
            self._M = assemble_mass(self.Q, self.quad_degree)
        return self._M

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return self.V.boundary_nodes(self.bcs.dirichlet_tags) if self.bcs.dirichlet_tags else np.empty(0, int)

    def initial_velocity(self) -> np.ndarray:
        u = np.zeros(self.V.dim)
        u[self.dirichlet_dofs] = self.dirichlet_values
        return u

    def assemble(self, u_k, p_k, gamma: int | None = None, params: PhysicalParams | None = None) -> AssembledSystem:
        """Constrained linear system for the update at ``(u_k, p_k)``."""
        params = self.params if params is None else params
        if gamma is not None:
            params = params.replace(gamma=gamma)
        deg = self.quad_degree
        A = assemble_operator(u_k, self.V, params, deg)
        F, G = assemble_rhs(u_k, p_k, self.V, self.Q, params, B=self.B, degree=deg)
        M_nu = assemble_scaled_mass(self.Q, u_k, self.V, params, deg)
        system = AssembledSystem(
            A=A,
            B=self.B,
            M=self.M,
            M_nu=M_nu,
            F=F,
            G=G,
            constrained=self.dirichlet_dofs,
            values=np.zeros(len(self.dirichlet_dofs)),
            pressure_kernel=self.pressure_kernel,
        )
        if self.bcs.slip_tags:
            system = rotate_slip_dofs(system, self.V, self.bcs.slip_tags, exclude_nodes=self.dirichlet_nodes)
        return apply_constraints(system)

    def residual_norm(self, system: AssembledSystem) -> float:
        G = system.G
        if system.pressure_kernel:
            G = G - G.mean()
        return float(np.sqrt(system.F @ system.F + G @ G))


@dataclass
class SolverConfig:
    method: str = "newton"
    r_tol: float = 1e-6
    a_tol: float = 1e-10
    max_iters: int = 60
    warm_start_steps: int = 0
    warm_start_rtol: float = 1e-2
    schur: str = "mnu"
    linear_solver: str = "gmres"
    linear_tol: float = 1e-10
    restart: int = 200
    linear_max_iters: int = 2000
    line_search: bool = False
    min_step: float = 2.0**-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}")
        if self.r_tol <= 0 or self.a_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.warm_start_steps < 0 or self.max_iters < 1:
            raise ValueError("iteration counts must be non-negative")
        if not 0.0 < self.min_step <= 1.0:
            raise ValueError("min_step must lie in (0, 1]")
        if self.linear_solver not in ("gmres", "direct"):
            raise ValueError("linear_solver must be 'gmres' or 'direct'")


@dataclass
class NonlinearState:
    u: np.ndarray
    p: np.ndarray
    k: int = 0
    warm_start_iters: int = 0
    residual_history: list = field(default_factory=list)
    krylov: list = field(default_factory=list)
    converged: bool = False
    initial_residual: float = np.nan

    @property
    def gmres_iters_mean(self) -> float:
        its = [r.iterations for r in self.krylov]
        return float(np.mean(its)) if its else 0.0


def linear_step(problem: StokesProblem, system: AssembledSystem, config: SolverConfig):
    """Solve one linearized system; returns physical ``(du, dp, report)``."""
    if config.linear_solver == "direct":
        du, dp = direct_solve(system)
        report = KrylovReport(0, 0.0, True)
    else:
        pc = make_preconditioner(system, config.schur)
        du, dp, report = gmres_solve(system, pc, config.linear_tol, config.restart, config.linear_max_iters)
        if report.breakdown:
            raise LinearSolverError("GMRES breakdown")
    return system.to_physical(du), dp, report


def nonlinear_solve(problem: StokesProblem, config: SolverConfig, u0=None, p0=None) -> NonlinearState:
    """Picard or Newton iteration with additive updates.

    Steps are undamped by default. With ``line_search`` the step is halved (down to ``min_step``) until the
    residual norm decreases; if no such step exists the full step is taken.
    Converged when ``||(F, G)|| <= max(r_tol * ||(F, G)(u0, p0)||, a_tol)``. An
    optional Picard warm start runs up to ``warm_start_steps`` steps, stopping
    early once the relative residual drops below ``warm_start_rtol``.
    """
    u = problem.initial_velocity() if u0 is None else np.array(u0, dtype=float)
    p = np.zeros(problem.Q.dim) if p0 is None else np.array(p0, dtype=float)
    state = NonlinearState(u, p)
    gamma = METHODS[config.method]

    def step(system, state, gam):
        du, dp, report = linear_step(problem, system, config)
        state.krylov.append(report)
        res = problem.residual_norm(system)

        def trial(alpha):
            u = state.u + alpha * du
            p = state.p + alpha * dp
            if problem.pressure_kernel:
                p = project_out_constant(p, problem.M)
            return u, p, problem.assemble(u, p, gamma=gam)

        u, p, new = trial(1.0)
        alpha = 1.0
        while config.line_search and problem.residual_norm(new) >= (1.0 - 1e-4 * alpha) * res:
            alpha *= 0.5
            if alpha < config.min_step:
                u, p, new = trial(1.0)
                break
            u, p, new = trial(alpha)
        else:
            if alpha < 1.0:
                log.debug("line search step %.3g", alpha)
        state.u, state.p = u, p
        return new

    system = problem.assemble(state.u, state.p, gamma=0 if config.warm_start_steps else gamma)
    r0 = problem.residual_norm(system)
    state.initial_residual = r0
    for _ in range(config.warm_start_steps):
        if problem.residual_norm(system) <= config.warm_start_rtol * r0:
            break
        system = step(system, state, 0)
        state.warm_start_iters += 1

    target = max(config.r_tol * r0, config.a_tol)
    if config.warm_start_steps:
        system = problem.assemble(state.u, state.p, gamma=gamma)
    while True:
        res = problem.residual_norm(system)
        state.residual_history.append(res)
        log.debug("%s iteration %d: residual %.3e", config.method, state.k, res)
        if res <= target:
            state.converged = True
            break
        if state.k >= config.max_iters:
            log.warning("no convergence after %d %s iterations (residual %.3e)", state.k, config.method, res)
            break
        system = step(system, state, gamma)
        state.k += 1
    return state


def error_norms(state: NonlinearState, problem: StokesProblem, exact, degree: int = 8) -> tuple[float, float]:
    """Velocity H1-seminorm error and mean-matched pressure L2 error.

    ``exact`` provides ``gradient(x, y)`` (trailing shape (2, 2)) and
    ``pressure(x, y)``.
    """
    cdv = cell_data(problem.V, degree)
    x, y = cdv.points[..., 0], cdv.points[..., 1]
    Gh = velocity_gradients(state.u, problem.V, degree)
    eG = Gh - exact.gradient(x, y)
    h1 = np.sqrt(np.sum(cdv.wdet * np.einsum("...ij,...ij->...", eG, eG)))
    ep = scalar_values(state.p, problem.Q, degree) - exact.pressure(x, y)
    area = cdv.wdet.sum()
    ep = ep - np.sum(cdv.wdet * ep) / area
    l2 = np.sqrt(np.sum(cdv.wdet * ep**2))
    return float(h1), float(l2)
