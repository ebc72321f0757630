import math

import numpy as np
import pytest

from pfbcp.harness import (ExactSolutionBcp, ExactSolutionNs, SweepSpec, experiment_presets,
                           mms_source_bcp, mms_source_ns, observed_orders, run_convergence,
                           table1_spec, table2_spec, table3_spec)
from pfbcp.model import ModelParams
from pfbcp.spectral import Grid2D


@pytest.fixture(scope="module")
def grid():
    return Grid2D(32, 32)


def test_exact_solution_values(grid):
    ex = ExactSolutionNs()
    X, Y = grid.coordinates()
    assert np.allclose(ex.phi(grid, 0.0), np.sin(2 * X) * np.sin(2 * Y) / 4 + 0.48)
    assert not ex.velocity(grid, 0.0).any() and not ex.pressure(grid, 0.0).any()
    assert np.max(np.abs(grid.divergence(ex.velocity(grid, 0.7)))) < 1e-12
    t = 0.3
    assert ex.time_factor_dt(t) == pytest.approx(
        (ex.time_factor(t + 1e-6) - ex.time_factor(t - 1e-6)) / 2e-6, rel=1e-8)


def test_bcp_source_reduces_to_time_derivative_without_dynamics(grid):
    # with zero mobility the source is just phi_t
    p = ModelParams(mobility=1e-300)
    t = 0.4
    ex = ExactSolutionBcp()
    assert np.allclose(mms_source_bcp(t, p, grid), ex.phi_t(grid, t))


def test_bcp_source_closed_form_at_time_zero(grid):
    # at t=0 phi_t vanishes; the rest is -M(lap mu - alpha(phi - mean))
    p = ModelParams(alpha=0.0)
    X, Y = grid.coordinates()
    g = np.sin(2 * X) * np.sin(2 * Y)
    phi = g / 4 + 0.48
    mu = p.epsilon**2 * 8 * g / 4 + phi**3 - phi
    assert np.allclose(mms_source_bcp(0.0, p, grid), -grid.laplacian(mu), atol=1e-10)


def test_ns_sources_at_time_zero(grid):
    p = ModelParams(lam=2.0)
    phi_src, mom_src = mms_source_ns(0.0, p, grid)
    phi = ExactSolutionBcp().phi(grid, 0.0)
    w = 2.0 * (-p.epsilon**2 * grid.laplacian(phi) + phi**3 - phi
               + p.alpha * grid.inverse_laplacian(phi))
    assert np.allclose(phi_src, -grid.laplacian(w), atol=1e-10)
    u_t = ExactSolutionNs().velocity_t(grid, 0.0)
    assert np.allclose(mom_src, u_t + phi * grid.gradient(w), atol=1e-10)


def test_observed_orders():
    orders = observed_orders([0.1, 0.05, 0.025], [4e-2, 1e-2, 2.5e-3])
    assert orders[0] is None
    assert orders[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(observed_orders([0.1, 0.05], [0.0, 1.0])[1])


@pytest.mark.parametrize("kwargs", [dict(dts=()), dict(dts=(0.01, 0.02)),
                                    dict(reference="fine"),
                                    dict(scheme="ns", reference="benchmark"),
                                    dict(reference="benchmark", dts=(0.03,))])
def test_sweep_spec_validation(kwargs):
    base = dict(scheme="cn", dts=(0.02, 0.01), t_end=0.1)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SweepSpec(**base)


def test_exact_reference_tolerates_ragged_end_time():
    spec = table2_spec(n=16)
    assert spec.dts[0] == 8e-3 and len(spec.dts) == 5
    assert spec.columns == ("u", "v", "p", "phi")


def test_table_specs():
    t1 = table1_spec("bdf2", 64)
    assert t1.scheme == "bdf2" and t1.n == 64 and len(t1.dts) == 8
    assert t1.dts[-1] == pytest.approx(2e-2 / 128)
    t3 = table3_spec()
    assert (t3.reference, t3.t_end, t3.benchmark_dt) == ("benchmark", 1.0, 1e-5)


def test_small_sweep_orders():
    spec = SweepSpec("cn", (1e-2, 5e-3, 2.5e-3), 0.05, n=16)
    rows = run_convergence(spec, workers=2)
    assert [r.dt for r in rows] == list(spec.dts)
    assert rows[0].orders["phi"] is None
    assert all(1.9 < r.orders["phi"] < 2.1 for r in rows[1:])
    assert all(r.failure is None for r in rows)


def test_benchmark_sweep_accepts_precomputed_reference():
    spec = SweepSpec("cn", (0.02, 0.01), 0.04, n=16, reference="benchmark", benchmark_dt=0.005)
    ref = np.full(spec.grid.shape, 7.0)
    rows = run_convergence(spec, benchmark=ref)
    assert rows[0].errors["phi"] > 1.0


def test_failed_rows_are_reported():
    spec = SweepSpec("cn", (0.05,), 0.1, n=16, max_iter=1, tol=1e-14)
    (row,) = run_convergence(spec)
    assert row.failure and math.isnan(row.errors["phi"])


def test_presets_cover_all_figures():
    presets = experiment_presets()
    assert sorted(presets, key=lambda k: int(k[3:])) == [f"fig{i}" for i in range(1, 12)]
    assert len(presets["fig1"].runs) == 5 and len(presets["fig6"].runs) == 4
    assert {r.scheme for r in presets["fig9"].runs} == {"ns"}
    fig10 = presets["fig10"].runs[0]
    assert (fig10.scheme, fig10.alpha, fig10.beta) == ("cn-electric", 10.0, 0.2)


def test_preset_time_cap():
    fig4 = experiment_presets()["fig4"]
    assert fig4.t_end() == 100.0 and fig4.t_end(extended=True) == 700.0
    assert fig4.snapshots() == (0.25, 0.5, 40) and fig4.snapshots(True)[-1] == 700
