import numpy as np
import pytest

from pstokes_lab.experiments import ExperimentConfig, glacier_problem, ms_convergence, ms_problem
from pstokes_lab.fem import BoundaryConditions, PhysicalParams, cell_data, slip_normals, velocity_gradients
from pstokes_lab.mesh import BoundaryTag, square_mesh
from pstokes_lab.solver import SolverConfig, StokesProblem, error_norms, linear_step, nonlinear_solve


def ms_cfg(**kw):
    base = dict(nx=8, eps_list=(1e-2,), plots=False)
    base.update(kw)
    return ExperimentConfig(**base)


def h1_seminorm(u, V):
    cd = cell_data(V)
    G = velocity_gradients(u, V)
    return float(np.sqrt(np.sum(cd.wdet * np.einsum("...ij,...ij->...", G, G))))


@pytest.mark.parametrize("method", ["picard", "newton"])
def test_newtonian_converges_in_one_step(method):
    problem, _ = ms_problem(ms_cfg(p_power=2.0, method=method))
    state = nonlinear_solve(problem, SolverConfig(method=method))
    assert state.converged
    assert state.k == 1


class PolynomialFlow:
    """``u = (y^2, x^2)``, ``pi = 2x - y``; with ``nu = 1`` the force is ``(1, -2)``."""

    @staticmethod
    def velocity(x, y):
        return np.stack([y**2, x**2], axis=-1)

    @staticmethod
    def gradient(x, y):
        G = np.zeros(np.shape(x) + (2, 2))
        G[..., 0, 1] = 2 * y
        G[..., 1, 0] = 2 * x
        return G

    @staticmethod
    def pressure(x, y):
        return 2 * x - y

    @staticmethod
    def force(x, y, params):
        return np.broadcast_to(np.array([1.0, -2.0]), np.shape(x) + (2,)).copy()


@pytest.mark.parametrize("method", ["picard", "newton"])
def test_polynomial_solution_is_exact(method):
    ex = PolynomialFlow()
    params = PhysicalParams(nu0=1.0, p=2.0, eps=0.1, body_force=ex.force)
    bcs = BoundaryConditions(dirichlet_tags=(BoundaryTag.DIRICHLET_ALL,), value=ex.velocity)
    problem = StokesProblem(square_mesh(3), "p2p1", params, bcs)
    state = nonlinear_solve(problem, SolverConfig(method=method, a_tol=1e-12))
    h1, l2 = error_norms(state, problem, ex)
    assert h1 <= 1e-10 and l2 <= 1e-10


def test_picard_and_newton_agree():
    cfg = ms_cfg(r_tol=1e-8)
    problem, _ = ms_problem(cfg.replace(method="picard"))
    up = nonlinear_solve(problem, cfg.replace(method="picard").solver_config("ms")).u
    problem, _ = ms_problem(cfg)
    state = nonlinear_solve(problem, cfg.solver_config("ms"))
    assert state.converged
    diff = h1_seminorm(up - state.u, problem.V) / h1_seminorm(state.u, problem.V)
    assert diff <= 10 * cfg.r_tol


def test_errors_decrease_on_small_meshes():
    errs = ms_convergence(ms_cfg(), nx_list=(4, 8, 16), eps=1e-2)
    h1 = [e[1] for e in errs]
    l2 = [e[2] for e in errs]
    assert h1[0] > h1[1] > h1[2]
    assert l2[0] > l2[1] > l2[2]


def test_additive_update():
    problem, _ = ms_problem(ms_cfg())
    cfg = SolverConfig(method="newton", max_iters=1, r_tol=1e-14)
    u0 = problem.initial_velocity()
    p0 = np.zeros(problem.Q.dim)
    du, dp, _ = linear_step(problem, problem.assemble(u0, p0, gamma=1), cfg)
    state = nonlinear_solve(problem, cfg)
    assert state.k == 1 and not state.converged
    assert np.array_equal(state.u, u0 + du)


def test_divergence_constraint_at_convergence():
    cfg = ms_cfg()
    problem, _ = ms_problem(cfg)
    solver = cfg.solver_config("ms")
    state = nonlinear_solve(problem, solver)
    assert state.converged
    assert state.residual_history[-1] <= solver.r_tol * state.initial_residual
    assert np.linalg.norm(problem.B @ state.u) <= 10 * solver.linear_tol * np.linalg.norm(state.u)


def small_glacier(**kw):
    base = dict(experiment="glacier", n_columns=16, n_layers=3, eps_list=(1e-2,), plots=False)
    base.update(kw)
    cfg = ExperimentConfig(**base)
    return cfg, glacier_problem(cfg)


def test_newton_first_step_from_zero_equals_picard():
    _, problem = small_glacier()
    one = dict(max_iters=1, r_tol=1e-14)
    un = nonlinear_solve(problem, SolverConfig(method="newton", **one)).u
    up = nonlinear_solve(problem, SolverConfig(method="picard", **one)).u
    assert np.array_equal(un, up)


def test_glacier_slip_and_no_slip():
    cfg, problem = small_glacier()
    state = nonlinear_solve(problem, cfg.solver_config())
    assert state.converged
    V = problem.V
    N = V.num_scalar_dofs
    ux, uy = state.u[:N], state.u[N:]
    bed = V.boundary_nodes([BoundaryTag.BED])
    assert np.all(ux[bed] == 0.0) and np.all(uy[bed] == 0.0)
    nodes, normals = slip_normals(V, [BoundaryTag.LAKE], exclude_nodes=bed)
    assert len(nodes) > 0
    un = ux[nodes] * normals[:, 0] + uy[nodes] * normals[:, 1]
    speed = np.hypot(ux, uy).max()
    assert speed > 1.0
    assert np.all(np.abs(un) <= 1e-10 * speed)


def test_zero_gravity_gives_zero_velocity():
    _, problem = small_glacier(gravity=(0.0, 0.0))
    state = nonlinear_solve(problem, SolverConfig())
    assert state.converged
    assert np.all(state.u == 0.0)


def test_line_search_option_converges():
    cfg = ms_cfg(line_search=True)
    problem, _ = ms_problem(cfg)
    state = nonlinear_solve(problem, cfg.solver_config("ms"))
    assert state.converged


def test_nonconvergence_is_flagged():
    problem, _ = ms_problem(ms_cfg(method="picard"))
    state = nonlinear_solve(problem, SolverConfig(method="picard", max_iters=1))
    assert not state.converged
    assert state.k == 1


@pytest.mark.parametrize(
    "kw",
    [dict(method="bfgs"), dict(r_tol=0.0), dict(max_iters=0), dict(min_step=0.0), dict(linear_solver="cg")],
)
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_direct_and_gmres_agree():
    cfg = ms_cfg()
    problem, _ = ms_problem(cfg)
    a = nonlinear_solve(problem, cfg.solver_config("ms"))
    b = nonlinear_solve(problem, cfg.replace(linear_solver="direct").solver_config("ms"))
    assert h1_seminorm(a.u - b.u, problem.V) <= 1e-6 * h1_seminorm(a.u, problem.V)
