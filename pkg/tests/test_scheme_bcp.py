import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import dense_oracle as oracle
from pfbcp.harness import ExactSolutionBcp, mms_source_bcp
from pfbcp.model import BcpState, ModelParams
from pfbcp.scheme_bcp import advance, step_bdf2, step_cn, step_cn_electric, step_first_order
from pfbcp.solvers import StepRejected
from pfbcp.spectral import Grid2D


def smooth_field(grid, seed, amp=0.5, mean=0.1):
    rng = np.random.default_rng(seed)
    f = grid.ifft(grid.fft(rng.standard_normal(grid.shape)) * np.exp(-grid.k2 / 8))
    return mean + amp * f / np.max(np.abs(f))


def bootstrapped(grid, params, dt, seed=0, **kw):
    s = BcpState.initial(grid, smooth_field(grid, seed, **kw))
    return step_first_order(s, params, dt, tol=1e-13).new_state


def test_history_required():
    grid = Grid2D(8, 8)
    s = BcpState.initial(grid, np.zeros(grid.shape))
    with pytest.raises(ValueError):
        step_cn(s, ModelParams(), 0.1)
    with pytest.raises(ValueError):
        step_bdf2(s, ModelParams(), 0.1)


def test_advance_bootstraps_then_uses_scheme():
    grid = Grid2D(8, 8)
    s = BcpState.initial(grid, smooth_field(grid, 1))
    out = advance(s, ModelParams(), 0.01, "bdf2")
    assert out.scheme == "first_order"
    assert advance(out.new_state, ModelParams(), 0.01, "bdf2").scheme == "bdf2"
    with pytest.raises(ValueError):
        advance(s, ModelParams(), 0.01, "rk4")


def test_constant_state_is_steady():
    grid = Grid2D(16, 16)
    s = BcpState.initial(grid, np.full(grid.shape, 0.2))
    for _ in range(3):
        out = advance(s, ModelParams(), 0.1)
        s = out.new_state
    assert np.array_equal(s.phi_n, np.full(grid.shape, 0.2))
    assert out.energy_after == out.energy_before


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10_000), log_dt=st.floats(-3, 0))
def test_cn_energy_identity(seed, log_dt):
    grid = Grid2D(32, 32)
    p = ModelParams()
    dt = 10.0**log_dt
    s = bootstrapped(grid, p, dt, seed)
    out = step_cn(s, p, dt, tol=1e-12)
    residual = out.energy_after - out.energy_before - out.dissipation_rhs
    assert abs(residual) / dt <= 1e-8 * max(1.0, abs(out.energy_before))


@pytest.mark.parametrize("dt", [1e-3, 1e-2, 1e-1, 1.0])
def test_bdf2_energy_non_increasing(dt):
    grid = Grid2D(32, 32)
    p = ModelParams()
    s = BcpState.initial(grid, smooth_field(grid, 11, amp=0.05, mean=0.0))
    energies = []
    for _ in range(10):
        out = advance(s, p, dt, "bdf2", tol=1e-12)
        energies.append(out.energy_after - out.energy_before)
        s = out.new_state
    assert max(energies) <= 1e-10


@pytest.mark.parametrize("dt", [1e-2, 1.0])
def test_bdf2_two_level_energy_identity(dt):
    grid = Grid2D(32, 32)
    p = ModelParams(alpha=2.0)
    s = bootstrapped(grid, p, dt, seed=21)
    out = step_bdf2(s, p, dt, tol=1e-13)
    residual = out.energy_after - out.energy_before - out.dissipation_rhs
    assert abs(residual) <= 1e-11 * out.energy_before


def test_first_order_energy_identity():
    grid = Grid2D(32, 32)
    p = ModelParams(alpha=2.0)
    s = BcpState.initial(grid, smooth_field(grid, 22))
    out = step_first_order(s, p, 0.3, tol=1e-13)
    residual = out.energy_after - out.energy_before - out.dissipation_rhs
    assert abs(residual) <= 1e-11 * out.energy_before


@pytest.mark.parametrize("scheme", ["cn", "bdf2", "cn-electric"])
def test_mass_is_conserved(scheme):
    grid = Grid2D(16, 16)
    p = ModelParams(beta=0.2, alpha=3.0)
    s = BcpState.initial(grid, smooth_field(grid, 2))
    m0 = grid.mean(s.phi_n)
    for _ in range(20):
        s = advance(s, p, 0.05, scheme).new_state
    assert abs(grid.mean(s.phi_n) - m0) < 1e-14


def test_electric_with_zero_beta_matches_cn():
    grid = Grid2D(16, 16)
    p = ModelParams()
    s = bootstrapped(grid, p, 0.01)
    a = step_cn(s, p, 0.01)
    b = step_cn_electric(s, p, 0.01)
    assert np.array_equal(a.new_state.phi_n, b.new_state.phi_n)


def test_electric_field_damps_x_variation():
    grid = Grid2D(16, 16)
    X, Y = grid.coordinates()
    phi = 0.01 * (np.cos(3 * X) + np.cos(3 * Y))
    p0, p1 = ModelParams(alpha=10.0), ModelParams(alpha=10.0, beta=5.0)
    s0 = s1 = BcpState.initial(grid, phi)
    for _ in range(20):
        s0 = advance(s0, p0, 0.01, "cn-electric").new_state
        s1 = advance(s1, p1, 0.01, "cn-electric").new_state
    amp_x = lambda f: abs(grid.fft(f)[0, 3])
    amp_y = lambda f: abs(grid.fft(f)[3, 0])
    assert amp_x(s1.phi_n) < 0.5 * amp_x(s0.phi_n)
    assert amp_y(s1.phi_n) == pytest.approx(amp_y(s0.phi_n), rel=1e-2)


def test_cn_and_bdf2_agree_to_second_order():
    grid = Grid2D(16, 16)
    p = ModelParams()
    diffs = []
    for dt in (2e-3, 1e-3, 5e-4):
        a = b = BcpState.initial(grid, smooth_field(grid, 5, amp=0.2))
        for _ in range(int(round(0.04 / dt))):
            a = advance(a, p, dt, "cn", tol=1e-13).new_state
            b = advance(b, p, dt, "bdf2", tol=1e-13).new_state
        diffs.append(grid.l2_norm(a.phi_n - b.phi_n))
    ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
    assert np.all(ratios > 3.5) and np.all(ratios < 4.5)


@pytest.mark.parametrize("scheme", ["cn", "bdf2"])
def test_mms_second_order(scheme):
    grid = Grid2D(32, 32)
    p = ModelParams()
    ex = ExactSolutionBcp()
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        s = BcpState.initial(grid, ex.phi(grid, 0.0))
        for _ in range(int(round(0.1 / dt))):
            s = advance(s, p, dt, scheme, lambda t: mms_source_bcp(t, p, grid), tol=1e-13).new_state
        errs.append(grid.l2_norm(s.phi_n - ex.phi(grid, 0.1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9) and np.all(orders < 2.15)


def test_step_rejected_when_iterations_exhausted():
    grid = Grid2D(32, 32)
    p = ModelParams()
    s = bootstrapped(grid, p, 0.5)
    with pytest.raises(StepRejected) as info:
        step_cn(s, p, 0.5, tol=1e-14, max_iter=1)
    assert not info.value.report.converged


# -- dense-matrix oracle ------------------------------------------------------

@pytest.fixture(scope="module")
def ops8():
    return oracle.DenseOps(8, 8)


def rel_err(a, b):
    return np.linalg.norm(np.ravel(a) - np.ravel(b)) / np.linalg.norm(np.ravel(b))


@pytest.mark.parametrize("dt", [1e-2, 0.5])
def test_cn_matches_dense_oracle(ops8, dt):
    grid = Grid2D(8, 8)
    p = ModelParams(alpha=2.0, mobility=0.7)
    s = bootstrapped(grid, p, dt, seed=3)
    out = step_cn(s, p, dt, tol=1e-14)
    phi, w, U = oracle.cn_step(ops8, s.phi_n, s.phi_nm1, s.u_aux_n, p.epsilon, p.alpha,
                               p.mobility, dt)
    assert rel_err(out.new_state.phi_n, phi) < 1e-10
    assert rel_err(out.chemical_potential, w) < 1e-9
    assert rel_err(out.new_state.u_aux_n, U) < 1e-10


def test_forced_cn_matches_dense_oracle(ops8):
    grid = Grid2D(8, 8)
    p = ModelParams()
    dt = 0.05
    s = bootstrapped(grid, p, dt, seed=4)
    src = lambda t: mms_source_bcp(t, p, grid)
    out = step_cn(s, p, dt, src, tol=1e-14)
    phi, _, _ = oracle.cn_step(ops8, s.phi_n, s.phi_nm1, s.u_aux_n, p.epsilon, p.alpha,
                               p.mobility, dt, source=src(s.time + dt / 2))
    assert rel_err(out.new_state.phi_n, phi) < 1e-10


def test_bdf2_matches_dense_oracle(ops8):
    grid = Grid2D(8, 8)
    p = ModelParams(alpha=1.0)
    dt = 0.1
    s = bootstrapped(grid, p, dt, seed=6)
    out = step_bdf2(s, p, dt, tol=1e-14)
    phi, w, U = oracle.bdf2_step(ops8, s.phi_n, s.phi_nm1, s.u_aux_n, s.u_aux_nm1, p.epsilon,
                                 p.alpha, p.mobility, dt)
    assert rel_err(out.new_state.phi_n, phi) < 1e-10
    assert rel_err(out.new_state.u_aux_n, U) < 1e-10


@pytest.mark.parametrize("beta", [0.0, 0.3])
def test_first_order_matches_dense_oracle(ops8, beta):
    grid = Grid2D(8, 8)
    p = ModelParams(alpha=0.5, beta=beta)
    s = BcpState.initial(grid, smooth_field(grid, 8))
    out = step_first_order(s, p, 0.2, tol=1e-14, electric=True)
    phi, _, _ = oracle.first_order_step(ops8, s.phi_n, s.u_aux_n, p.epsilon, p.alpha,
                                        p.mobility, 0.2, beta=beta)
    assert rel_err(out.new_state.phi_n, phi) < 1e-10


def test_electric_matches_dense_oracle(ops8):
    grid = Grid2D(8, 8)
    p = ModelParams(alpha=10.0, beta=0.2)
    dt = 0.05
    s = bootstrapped(grid, p, dt, seed=9)
    out = step_cn_electric(s, p, dt, tol=1e-14)
    phi, _, _ = oracle.cn_step(ops8, s.phi_n, s.phi_nm1, s.u_aux_n, p.epsilon, p.alpha,
                               p.mobility, dt, beta=p.beta)
    assert rel_err(out.new_state.phi_n, phi) < 1e-10


# -- reduced operator structure -----------------------------------------------

@pytest.mark.parametrize("scheme,electric", [("cn", False), ("bdf2", False), ("cn", True)])
def test_reduced_operator_is_symmetric_positive_definite(scheme, electric):
    from pfbcp.scheme_bcp import ReducedProblem
    from pfbcp.solvers import step_symbol, symmetry_audit

    grid = Grid2D(32, 32)
    p = ModelParams(alpha=4.0, beta=0.3)
    phi_ext = smooth_field(grid, 13, amp=0.9)
    problem = ReducedProblem(grid, step_symbol(grid, p, 0.01, scheme, electric), phi_ext,
                             np.zeros(grid.shape))
    rng = np.random.default_rng(0)

    def sample():
        x = rng.standard_normal(grid.shape)
        return x - x.mean()

    assert symmetry_audit(problem.apply, grid.shape, n_pairs=10, sample=sample) < 1e-10
    for _ in range(5):
        x = sample()
        assert grid.inner(problem.apply(x), x) > 0


def test_pcg_iterations_stay_bounded_on_large_grid():
    grid = Grid2D(128, 128)
    p = ModelParams()
    s = bootstrapped(grid, p, 1e-2, seed=14, amp=1.0, mean=0.0)
    out = step_cn(s, p, 1e-2, tol=1e-10)
    assert out.solve_report.iterations <= 30
