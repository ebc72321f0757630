"""Manufactured solutions, convergence sweeps and canned experiment setups."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .driver import initial_state, make_stepper, march, steps_to_reach
from .model import ModelParams, double_well_deriv
from .solvers import DEFAULT_MAX_ITER, StepRejected
from .spectral import Grid2D

log = logging.getLogger(__name__)


# -- manufactured solutions -----------------------------------------------------

class ExactSolutionBcp:
    """``phi = (sin 2x sin 2y / 4 + 0.48)(1 - sin(t)**2 / 2)``."""

    @staticmethod
    def profile(grid: Grid2D) -> np.ndarray:
        X, Y = grid.coordinates()
        return np.sin(2 * X) * np.sin(2 * Y) / 4.0 + 0.48

    @staticmethod
    def time_factor(t: float) -> float:
        return 1.0 - 0.5 * math.sin(t) ** 2

    @staticmethod
    def time_factor_dt(t: float) -> float:
        return -math.sin(t) * math.cos(t)

    def phi(self, grid: Grid2D, t: float) -> np.ndarray:
        return self.profile(grid) * self.time_factor(t)

    def phi_t(self, grid: Grid2D, t: float) -> np.ndarray:
        return self.profile(grid) * self.time_factor_dt(t)


class ExactSolutionNs(ExactSolutionBcp):
    """Adds the divergence-free velocity and mean-zero pressure."""

    @staticmethod
    def _shapes(grid: Grid2D):
        X, Y = grid.coordinates()
        u = np.sin(2 * Y) * np.sin(X) ** 2
        v = -np.sin(2 * X) * np.sin(Y) ** 2
        p = np.cos(X) * np.sin(Y)
        return np.stack([u, v]), p

    def velocity(self, grid: Grid2D, t: float) -> np.ndarray:
        return self._shapes(grid)[0] * math.sin(t)

    def velocity_t(self, grid: Grid2D, t: float) -> np.ndarray:
        return self._shapes(grid)[0] * math.cos(t)

    def pressure(self, grid: Grid2D, t: float) -> np.ndarray:
        return self._shapes(grid)[1] * math.sin(t)


def mms_source_bcp(t: float, params: ModelParams, grid: Grid2D,
                   exact: Optional[ExactSolutionBcp] = None) -> np.ndarray:
    """Source making the exact profile solve ``phi_t = M(lap mu - alpha(phi - mean phi))``."""
    exact = exact or ExactSolutionBcp()
    phi = exact.phi(grid, t)
    mu = -params.epsilon**2 * grid.laplacian(phi) + double_well_deriv(phi)
    return exact.phi_t(grid, t) - params.mobility * (grid.laplacian(mu) - params.alpha * (phi - phi.mean()))


def mms_source_ns(t: float, params: ModelParams, grid: Grid2D,
                  exact: Optional[ExactSolutionNs] = None) -> tuple[np.ndarray, np.ndarray]:
    """Sources for the phase and momentum equations of the coupled model."""
    exact = exact or ExactSolutionNs()
    phi = exact.phi(grid, t)
    u = exact.velocity(grid, t)
    p = exact.pressure(grid, t)
    w = params.lam * (-params.epsilon**2 * grid.laplacian(phi) + double_well_deriv(phi)
                      + params.alpha * grid.inverse_laplacian(phi))
    phi_src = exact.phi_t(grid, t) + grid.divergence(u * phi) - params.mobility * grid.laplacian(w)
    grad_w = grid.gradient(w)
    adv = np.stack([u[0] * grid.partial_x(c) + u[1] * grid.partial_y(c) for c in u])
    lap_u = np.stack([grid.laplacian(c) for c in u])
    mom_src = exact.velocity_t(grid, t) + adv + grid.gradient(p) - params.nu * lap_u + phi * grad_w
    return phi_src, mom_src


# -- convergence sweeps -------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """One convergence table: a scheme run to ``t_end`` at each step size.

    Against the exact solution, a ``t_end`` that is not a multiple of some
    ``dt`` is reached to the nearest whole step and the error is measured
    at the time actually reached. Benchmark comparisons require multiples.

    ``reference="exact"`` compares against the manufactured solution (with
    its source term switched on); ``reference="benchmark"`` compares
    against an unforced Crank-Nicolson run at ``benchmark_dt`` from the
    same initial profile.
    """

    scheme: str
    dts: tuple
    t_end: float
    n: int = 128
    params: ModelParams = field(default_factory=ModelParams)
    reference: str = "exact"
    benchmark_dt: float = 1e-5
    tol: float = 1e-12
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "dts", tuple(float(d) for d in self.dts))
        if not self.dts:
            raise ValueError("dts must not be empty")
        if any(b >= a for a, b in zip(self.dts, self.dts[1:])):
            raise ValueError("dts must be strictly decreasing")
        if self.reference not in ("exact", "benchmark"):
            raise ValueError(f"reference must be 'exact' or 'benchmark', got {self.reference!r}")
        if self.reference == "benchmark" and self.scheme == "ns":
            raise ValueError("benchmark references are only defined for the BCP schemes")
        strict = self.reference == "benchmark"
        for dt in self.dts + ((self.benchmark_dt,) if strict else ()):
            steps_to_reach(self.t_end, dt, strict=strict)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.n, self.n)

    @property
    def columns(self) -> tuple:
        return ("u", "v", "p", "phi") if self.scheme == "ns" else ("phi",)


@dataclass
class ConvergenceRow:
    dt: float
    errors: dict
    orders: dict
    failure: Optional[str] = None


def observed_orders(dts: Sequence[float], errors: Sequence[float]) -> list:
    """``log(e_i / e_{i+1}) / log(dt_i / dt_{i+1})``; ``None`` for the first row."""
    out = [None]
    for (d0, e0), (d1, e1) in zip(zip(dts, errors), zip(dts[1:], errors[1:])):
        ok = e0 > 0 and e1 > 0 and np.isfinite(e0) and np.isfinite(e1)
        out.append(math.log(e0 / e1) / math.log(d0 / d1) if ok else float("nan"))
    return out


def _run_bcp(spec: SweepSpec, grid: Grid2D, dt: float, scheme: str, forced: bool):
    exact = ExactSolutionBcp()
    forcing = (lambda t: mms_source_bcp(t, spec.params, grid, exact)) if forced else None
    state = initial_state(scheme, grid, exact.phi(grid, 0.0))
    step = make_stepper(scheme, spec.params, dt, forcing, spec.tol, spec.max_iter)
    for out in march(state, step, steps_to_reach(spec.t_end, dt, strict=not forced)):
        state = out.new_state
    return state


def _run_ns(spec: SweepSpec, grid: Grid2D, dt: float) -> dict:
    exact = ExactSolutionNs()
    state = initial_state("ns", grid, exact.phi(grid, 0.0), exact.velocity(grid, 0.0),
                          exact.pressure(grid, 0.0))
    step = make_stepper("ns", spec.params, dt, lambda t: mms_source_ns(t, spec.params, grid, exact),
                        spec.tol, spec.max_iter)
    for out in march(state, step, steps_to_reach(spec.t_end, dt, strict=False)):
        state = out.new_state
    t = state.time
    u_e, p_e = exact.velocity(grid, t), exact.pressure(grid, t)
    return {"u": grid.l2_norm(state.velocity_n[0] - u_e[0]),
            "v": grid.l2_norm(state.velocity_n[1] - u_e[1]),
            "p": grid.l2_norm(state.pressure_n - (p_e - p_e.mean())),
            "phi": grid.l2_norm(state.phi_n - exact.phi(grid, t))}


def _row(spec: SweepSpec, grid: Grid2D, dt: float, benchmark) -> tuple:
    try:
        if spec.scheme == "ns":
            return _run_ns(spec, grid, dt), None
        if spec.reference == "exact":
            state = _run_bcp(spec, grid, dt, spec.scheme, True)
            ref = ExactSolutionBcp().phi(grid, state.time)
            return {"phi": grid.l2_norm(state.phi_n - ref)}, None
        state = _run_bcp(spec, grid, dt, spec.scheme, False)
        return {"phi": grid.l2_norm(state.phi_n - benchmark)}, None
    except (StepRejected, FloatingPointError) as exc:
        log.warning("sweep row dt=%g failed: %s", dt, exc)
        return {c: float("nan") for c in spec.columns}, str(exc)


def run_convergence(spec: SweepSpec, workers: int = 1, benchmark: Optional[np.ndarray] = None):
    """Errors and observed orders for every step size of ``spec``.

    Rows are independent and may run on ``workers`` threads. A
    precomputed ``benchmark`` field can be passed to skip the fine run.
    """
    grid = spec.grid
    if spec.reference == "benchmark" and benchmark is None:
        benchmark = _run_bcp(spec, grid, spec.benchmark_dt, "cn", False).phi_n
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda dt: _row(spec, grid, dt, benchmark), spec.dts))
    else:
        results = [_row(spec, grid, dt, benchmark) for dt in spec.dts]
    orders = {c: observed_orders(spec.dts, [r[0][c] for r in results]) for c in spec.columns}
    return [ConvergenceRow(dt, errs, {c: orders[c][i] for c in spec.columns}, failure)
            for i, (dt, (errs, failure)) in enumerate(zip(spec.dts, results))]


def table1_spec(scheme: str = "cn", n: int = 128) -> SweepSpec:
    return SweepSpec(scheme, tuple(2e-2 / 2**i for i in range(8)), 0.1, n)


def table2_spec(n: int = 128) -> SweepSpec:
    return SweepSpec("ns", tuple(8e-3 / 2**i for i in range(5)), 0.1, n)


def table3_spec(scheme: str = "cn", n: int = 128, benchmark_dt: float = 1e-5) -> SweepSpec:
    return SweepSpec(scheme, tuple(2e-2 / 2**i for i in range(8)), 1.0, n,
                     reference="benchmark", benchmark_dt=benchmark_dt)


# -- experiment presets -------------------------------------------------------

DEFAULT_T_CAP = 100.0


@dataclass(frozen=True)
class PresetRun:
    label: str
    scheme: str
    alpha: float
    phi_mean: float
    dt: float = 1e-3
    beta: float = 0.0


@dataclass(frozen=True)
class Preset:
    """A named experiment: one or more runs sharing end time and snapshots."""

    name: str
    description: str
    runs: tuple
    full_t_end: float
    snapshot_times: tuple = ()

    def t_end(self, extended: bool = False) -> float:
        return self.full_t_end if extended else min(self.full_t_end, DEFAULT_T_CAP)

    def snapshots(self, extended: bool = False) -> tuple:
        end = self.t_end(extended)
        return tuple(t for t in self.snapshot_times if t <= end)


def _single(name, description, scheme, alpha, phi_mean, snaps, beta=0.0):
    return Preset(name, description, (PresetRun(name, scheme, alpha, phi_mean, beta=beta),),
                  max(snaps), tuple(snaps))


def experiment_presets() -> dict:
    """The phase-separation scenarios, keyed by figure name."""
    presets = [
        Preset("fig1", "energy decay for five step sizes, alpha=0.001, mean 0",
               tuple(PresetRun(f"dt={dt:g}", "cn", 0.001, 0.0, dt)
                     for dt in (1e-4, 5e-4, 1e-3, 5e-3, 1e-2)), 1.0),
        _single("fig2", "PF-BCP lamellae, alpha=0.001, mean 0", "cn", 0.001, 0.0,
                (0.25, 0.5, 1, 5, 10, 20, 30, 100)),
        _single("fig3", "PF-BCP droplets, alpha=0.001, mean 0.3", "cn", 0.001, 0.3,
                (0.25, 0.5, 1, 10, 40, 60, 100, 400)),
        _single("fig4", "PF-BCP lamellae, alpha=5, mean 0", "cn", 5.0, 0.0, (0.25, 0.5, 40, 700)),
        _single("fig5", "PF-BCP cylinders, alpha=10, mean 0.3", "cn", 10.0, 0.3,
                (0.25, 1, 60, 700)),
        Preset("fig6", "PF-BCP energy curves for four (alpha, mean) cases",
               tuple(PresetRun(label, "cn", a, m) for label, a, m in
                     (("A", 0.001, 0.0), ("B", 0.001, 0.3), ("C", 5.0, 0.0), ("D", 5.0, 0.3))),
               700.0),
        _single("fig7", "PF-BCP-NS lamellae, alpha=5, mean 0", "ns", 5.0, 0.0, (0.25, 1, 20, 200)),
        _single("fig8", "PF-BCP-NS cylinders, alpha=5, mean 0.3", "ns", 5.0, 0.3,
                (0.25, 1, 20, 200)),
        Preset("fig9", "PF-BCP-NS energy curves, alpha=5, means 0 and 0.3",
               (PresetRun("A", "ns", 5.0, 0.0), PresetRun("B", "ns", 5.0, 0.3)), 200.0),
        _single("fig10", "electric field beta=0.2, alpha=10, mean 0", "cn-electric", 10.0, 0.0,
                (0.25, 0.5, 5, 700), beta=0.2),
        _single("fig11", "electric field beta=0.2, alpha=10, mean 0.3", "cn-electric", 10.0, 0.3,
                (0.25, 0.5, 4, 700), beta=0.2),
    ]
    return {p.name: p for p in presets}
