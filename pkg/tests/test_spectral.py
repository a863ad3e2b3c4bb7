import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from pstokes_lab.experiments import ExperimentConfig, ms_problem
from pstokes_lab.fem import PhysicalParams, assemble_operator
from pstokes_lab.spectral import (
    DenseCapExceeded,
    NotSPDError,
    SpectralReport,
    analyze_state,
    c0_constant,
    cnu_constant,
    generalized_eigs,
    infsup_constant,
    kernel_deflation,
    schur_complement,
    smallest_nonzero,
    spectral_sweep,
    theoretical_bounds,
)
from pstokes_lab.solver import SolverConfig


def random_spd(n, rng):
    X = rng.normal(size=(n, n))
    return X @ X.T + n * np.eye(n)


# -- Schur complement ------------------------------------------------------------

def test_schur_identity_a():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(4, 7))
    assert np.allclose(schur_complement(sp.eye(7), sp.csr_matrix(B)), B @ B.T, rtol=1e-13)


def test_schur_hand_case():
    S = schur_complement(sp.diags([2.0, 2.0]), sp.eye(2))
    assert np.allclose(S, 0.5 * np.eye(2), rtol=1e-14)


def test_schur_dense_inverse_oracle():
    rng = np.random.default_rng(1)
    A = random_spd(20, rng)
    B = rng.normal(size=(10, 20))
    S = schur_complement(sp.csr_matrix(A), sp.csr_matrix(B))
    ref = B @ np.linalg.inv(A) @ B.T
    assert np.allclose(S, ref, rtol=1e-10, atol=1e-12)
    assert np.array_equal(S, S.T)


def test_schur_dense_cap():
    with pytest.raises(DenseCapExceeded):
        schur_complement(sp.eye(3), sp.csr_matrix(np.ones((5, 3))), dense_cap=4)


# -- generalized eigenvalues ------------------------------------------------------

def test_eigs_identical_and_scaled():
    rng = np.random.default_rng(2)
    St = random_spd(6, rng)
    assert np.allclose(generalized_eigs(St, St), 1.0, rtol=1e-12)
    assert np.allclose(generalized_eigs(2 * St, St), 2.0, rtol=1e-12)


def test_eigs_pencil_oracle():
    rng = np.random.default_rng(3)
    S, St = random_spd(5, rng), random_spd(5, rng)
    ref = la.eigh(S, St, eigvals_only=True)
    assert np.allclose(generalized_eigs(sp.csr_matrix(S), St), ref, rtol=1e-12)


def test_eigs_deflated_oracle():
    rng = np.random.default_rng(4)
    S, St = random_spd(6, rng), random_spd(6, rng)
    c = rng.normal(size=(1, 6))
    Z = la.null_space(c)
    ref = la.eigh(Z.T @ S @ Z, Z.T @ St @ Z, eigvals_only=True)
    got = generalized_eigs(S, St, deflation=c)
    assert len(got) == 5
    assert np.allclose(got, ref, rtol=1e-12)


def test_eigs_reject_non_spd():
    with pytest.raises(NotSPDError):
        generalized_eigs(np.eye(3), -np.eye(3))
    with pytest.raises(NotSPDError):
        generalized_eigs(np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_dependent_deflation_rejected():
    with pytest.raises(ValueError):
        generalized_eigs(np.eye(3), np.eye(3), deflation=np.ones((2, 3)))


def test_smallest_nonzero():
    assert smallest_nonzero(np.array([1e-14, 0.2, 3.0])) == 0.2
    assert smallest_nonzero(np.array([0.0, 0.0, 1.0])) == 1.0


# -- bounds -------------------------------------------------------------------------

def test_bounds_mnu():
    newton = PhysicalParams(p=4 / 3, gamma=1)
    picard = PhysicalParams(p=4 / 3, gamma=0)
    assert np.isclose(theoretical_bounds(newton, 0.3, 0.2, 1.0, "mnu")[1], 6.0)
    assert np.isclose(theoretical_bounds(picard, 0.3, 0.2, 1.0, "mnu")[1], 2.0)
    assert np.isclose(theoretical_bounds(picard, 0.3, 0.2, 1.0, "mnu")[0], 0.04)


def test_bounds_m():
    params = PhysicalParams(nu0=1.0, p=4 / 3, eps=1e-6, gamma=1)
    lo, hi = theoretical_bounds(params, 0.146, 0.1, 1.0, "m")
    assert np.isclose(lo, 0.146**2 * 1e-4, rtol=1e-10)
    assert np.isclose(lo, 2.13e-6, rtol=1e-3)
    assert np.isclose(hi, (1e-12 + 1.0) ** (1 / 3) * 3.0, rtol=1e-12)


def test_bounds_newtonian_and_unknown():
    params = PhysicalParams(nu0=2.0, p=2.0, eps=0.0)
    assert theoretical_bounds(params, 0.5, 0.5, 7.0, "m") == (0.125, 0.5)
    with pytest.raises(ValueError):
        theoretical_bounds(params, 0.5, 0.5, 7.0, "diag")


def test_report_containment():
    r = SpectralReport(1e-2, 0.5, 2.0, 0.5, 2.0, 0.7, 0.7, 1.0, "newton", "p2p1", "mnu")
    assert r.contained()
    r.lambda_max = 2.0 * (1 + 1e-5)
    assert not r.contained()
    assert r.as_dict()["schur_choice"] == "mnu"


# -- discrete problems ----------------------------------------------------------------

def small_ms(nx=4, **kw):
    cfg = ExperimentConfig(nx=nx, eps_list=(1e-2,), **kw)
    return ms_problem(cfg)[0]


def test_near_kernel_dimension_one():
    problem = small_ms()
    system = problem.assemble(problem.initial_velocity(), np.zeros(problem.Q.dim))
    free = system.free
    S = schur_complement(system.A[free][:, free], system.B[:, free])
    eigs = generalized_eigs(S, system.M)
    assert np.sum(eigs < 1e-10 * eigs.max()) == 1
    defl = generalized_eigs(S, system.M, kernel_deflation(system.M, True))
    assert len(defl) == len(eigs) - 1
    assert np.allclose(defl, eigs[1:], rtol=1e-8)


def test_cnu_scale_invariant_for_constant_viscosity():
    # with nu = nu0 the weights cancel between the two norms
    base = small_ms(p_power=2.0)
    u = base.initial_velocity()
    vals = []
    for nu0 in (1.0, 7.5):
        prob = base.with_params(base.params.replace(nu0=nu0))
        system = prob.assemble(u, np.zeros(prob.Q.dim), gamma=0)
        vals.append(cnu_constant(prob, u, system))
    assert np.isclose(vals[0], vals[1], rtol=1e-8)
    # and equals the unweighted constant in the strain-rate norm
    system = base.assemble(u, np.zeros(base.Q.dim), gamma=0)
    free = system.free
    K = assemble_operator(u, base.V, base.params.replace(nu0=1.0), gamma=0)[free][:, free]
    c_d = infsup_constant(K, system.B[:, free], system.M, kernel_deflation(system.M, True))
    assert np.isclose(vals[0], c_d, rtol=1e-8)


def test_c0_positive_and_cached():
    problem = small_ms()
    c0 = c0_constant(problem)
    assert 0.1 < c0 < 1.0
    assert c0_constant(problem) == c0


def test_newtonian_spectrum_in_bounds():
    problem = small_ms(p_power=2.0)
    reports, _ = spectral_sweep(problem, [1.0], ("m", "mnu"), "picard", SolverConfig(method="picard"))
    for r in reports:
        assert r.contained()
        assert r.lambda_max <= 1.0 + 1e-10
        assert r.lambda_min_nonzero >= r.c0**2 * (1 - 1e-10)


def test_analyze_state_returns_spectra():
    problem = small_ms()
    u = problem.initial_velocity()
    reports, spectra = analyze_state(problem, u, np.zeros(problem.Q.dim), "picard", return_eigs=True)
    assert {r.schur_choice for r in reports} == {"m", "mnu"}
    assert len(spectra["m"]) == problem.Q.dim - 1


def test_lambda_max_scales_with_eps_when_eps_dominates():
    # eps >> |Du| makes the viscosity nearly nu0 eps^(p-2), so lambda(M^-1 S) ~ eps^(2-p)
    problem = small_ms(p_power=4 / 3)
    u = problem.initial_velocity()
    lam = []
    for eps in (1e2, 1e3):
        prob = problem.with_params(problem.params.replace(eps=eps))
        r = analyze_state(prob, u, np.zeros(prob.Q.dim), "newton", ("m",))[0]
        lam.append(r.lambda_max)
    slope = np.log10(lam[1] / lam[0])
    assert np.isclose(slope, 2 - 4 / 3, rtol=1e-3)
