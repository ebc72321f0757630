"""Linear IEQ time steppers for the block copolymer Cahn-Hilliard model.

Every stepper eliminates the auxiliary variable ``U`` and the chemical
potential ``w``, applies ``(-lap)^{-1}`` and solves the remaining
symmetric positive definite problem for the increment ``phi^{n+1} - phi^n``
with PCG.

The reduced problem lives on mean-zero fields. The mean of ``phi^{n+1}``
is fixed beforehand by the discrete mass balance, because the mean of
``w`` is a free constant that ``(-lap)^{-1}`` cannot see.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (BcpState, ModelParams, discrete_energy_bdf2, discrete_energy_cn,
                    energy_quadratized)
from .solvers import (DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, StepRejected,
                      bcp_step_preconditioner, pcg_solve,
                      step_symbol)
from .spectral import Grid2D

Forcing = Callable[[float], np.ndarray]


@dataclass
class StepOutput:
    new_state: BcpState
    chemical_potential: np.ndarray
    solve_report: SolveReport
    energy_before: float
    energy_after: float
    dissipation_rhs: float
    scheme: str


@dataclass
class ReducedProblem:
    """Increment form ``A d = r`` of a step, with ``phi^{n+1} = phi^n + d``.

    ``A = symbol(k) + 2 * phi_ext**2`` followed by removal of the mean; the
    mean of ``d`` is prescribed (``mean_shift``) by the mass balance.
    Writing the step in increment form cancels the ``1/dt``-sized terms
    analytically, so the solver tolerance is relative to the change.
    """

    grid: Grid2D
    symbol: np.ndarray
    phi_ext: np.ndarray
    rhs: np.ndarray
    mean_shift: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        self._q2 = 2.0 * self.phi_ext * self.phi_ext

    def apply(self, d: np.ndarray) -> np.ndarray:
        out = self.grid.apply_symbol(d, self.symbol) + self._q2 * d
        return out - out.mean()

    def projected_rhs(self) -> np.ndarray:
        r = self.rhs - self._q2 * self.mean_shift
        return r - r.mean()


def _solve(problem: ReducedProblem, precond, guess, tol, max_iter, what: str):
    rhs = problem.projected_rhs()
    g = None if guess is None else guess - guess.mean()
    # absolute floor: an rhs that is pure cancellation round-off counts as zero
    atol = 1e-14 * max(problem.scale, np.linalg.norm(problem.rhs))
    d, report = pcg_solve(problem.apply, rhs, precond, tol=tol, max_iter=max_iter,
                          initial_guess=g, atol=atol)
    if not report.converged:
        raise StepRejected(f"{what}: PCG did not converge", report)
    d = problem.mean_shift + (d - d.mean())
    if not np.all(np.isfinite(d)):
        raise FloatingPointError(f"{what}: non-finite phi")
    return d, report


def _source(grid, forcing, t):
    if forcing is None:
        return None
    return grid.check(forcing(t))


def _norms(*fields) -> float:
    return float(sum(np.linalg.norm(f) for f in fields))


def step_cn(state: BcpState, params: ModelParams, dt: float, forcing: Optional[Forcing] = None,
            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
            electric: bool = False) -> StepOutput:
    """Second-order Crank-Nicolson IEQ step (needs two history levels).

    With ``electric=True`` the implicit term ``beta * phi_xx^{n+1/2}`` is
    added to the phase equation.
    """
    if not state.has_history:
        raise ValueError("step_cn needs phi^{n-1}; take a step_first_order step first")
    grid, M, eps2, alpha = state.grid, params.mobility, params.epsilon**2, params.alpha
    phi_n, phi_nm1, U_n = state.phi_n, state.phi_nm1, state.u_aux_n
    phi_star = 1.5 * phi_n - 0.5 * phi_nm1

    lap_term = eps2 * grid.laplacian(phi_n)
    ieq_term = phi_star * U_n
    nonlocal_term = alpha * grid.inverse_laplacian(phi_n)
    rhs = 2.0 * (lap_term - ieq_term - nonlocal_term)
    if electric and params.beta:
        # (-lap)^{-1} d_xx has symbol -kx^2/|k|^2
        rhs += (2.0 * params.beta / M) * grid.inverse_laplacian(grid.partial_xx(phi_n))
    mean_shift = 0.0
    s = _source(grid, forcing, state.time + 0.5 * dt)
    if s is not None:
        rhs += (2.0 / M) * grid.inverse_laplacian(s)
        mean_shift = dt * grid.mean(s)

    problem = ReducedProblem(grid, step_symbol(grid, params, dt, "cn", electric), phi_star, rhs,
                             mean_shift, _norms(lap_term, ieq_term, nonlocal_term))
    precond = bcp_step_preconditioner(grid, params, dt, phi_star, "cn", electric)
    d, report = _solve(problem, precond, phi_n - phi_nm1, tol, max_iter, "step_cn")
    phi_new = phi_n + d

    U_new = U_n + 2.0 * phi_star * d
    phi_half = phi_n + 0.5 * d
    w = (-eps2 * grid.laplacian(phi_half) + phi_star * 0.5 * (U_new + U_n)
         + alpha * grid.inverse_laplacian(phi_half))
    new_state = BcpState(grid, phi_new, U_new, phi_n, U_n, state.time + dt, state.step_index + 1)
    return StepOutput(new_state, w, report, discrete_energy_cn(state, params),
                      discrete_energy_cn(new_state, params),
                      -dt * M * grid.h1_seminorm_sq(w), "cn_electric" if electric else "cn")


def step_cn_electric(state: BcpState, params: ModelParams, dt: float,
                     forcing: Optional[Forcing] = None, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> StepOutput:
    return step_cn(state, params, dt, forcing, tol, max_iter, electric=True)


def step_bdf2(state: BcpState, params: ModelParams, dt: float, forcing: Optional[Forcing] = None,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> StepOutput:
    """Second-order BDF2 IEQ step (needs two history levels)."""
    if not state.has_history:
        raise ValueError("step_bdf2 needs phi^{n-1}; take a step_first_order step first")
    grid, M, eps2, alpha = state.grid, params.mobility, params.epsilon**2, params.alpha
    phi_n, phi_nm1, U_n, U_nm1 = state.phi_n, state.phi_nm1, state.u_aux_n, state.u_aux_nm1
    phi_dag = 2.0 * phi_n - phi_nm1
    delta = phi_n - phi_nm1
    U_hist = (4.0 * U_n - U_nm1) / 3.0

    lap_term = eps2 * grid.laplacian(phi_n)
    ieq_term = phi_dag * U_hist
    nonlocal_term = alpha * grid.inverse_laplacian(phi_n)
    rhs = ((1.0 / (2.0 * M * dt)) * grid.inverse_laplacian(delta) + lap_term - ieq_term
           - nonlocal_term + (2.0 / 3.0) * phi_dag**2 * delta)
    mean_shift = (grid.mean(phi_n) - grid.mean(phi_nm1)) / 3.0
    s = _source(grid, forcing, state.time + dt)
    if s is not None:
        rhs += (1.0 / M) * grid.inverse_laplacian(s)
        mean_shift += (2.0 / 3.0) * dt * grid.mean(s)

    problem = ReducedProblem(grid, step_symbol(grid, params, dt, "bdf2"), phi_dag, rhs,
                             mean_shift, _norms(lap_term, ieq_term, nonlocal_term))
    precond = bcp_step_preconditioner(grid, params, dt, phi_dag, "bdf2")
    d, report = _solve(problem, precond, delta, tol, max_iter, "step_bdf2")
    phi_new = phi_n + d

    U_new = U_hist + (2.0 / 3.0) * phi_dag * (3.0 * d - delta)
    w = -eps2 * grid.laplacian(phi_new) + phi_dag * U_new + alpha * grid.inverse_laplacian(phi_new)
    new_state = BcpState(grid, phi_new, U_new, phi_n, U_n, state.time + dt, state.step_index + 1)
    # the two-level energy loses dt*M*|grad w|^2 plus half the energy of the second differences
    numerical = 0.5 * energy_quadratized(grid, d - delta, U_new - 2.0 * U_n + U_nm1, params)
    return StepOutput(new_state, w, report, discrete_energy_bdf2(state, params),
                      discrete_energy_bdf2(new_state, params),
                      -dt * M * grid.h1_seminorm_sq(w) - numerical, "bdf2")


def step_first_order(state: BcpState, params: ModelParams, dt: float,
                     forcing: Optional[Forcing] = None, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER, electric: bool = False) -> StepOutput:
    """Backward-Euler IEQ step used to create the second history level."""
    grid, M, eps2, alpha = state.grid, params.mobility, params.epsilon**2, params.alpha
    phi_n, U_n = state.phi_n, state.u_aux_n

    lap_term = eps2 * grid.laplacian(phi_n)
    ieq_term = phi_n * U_n
    nonlocal_term = alpha * grid.inverse_laplacian(phi_n)
    rhs = lap_term - ieq_term - nonlocal_term
    if electric and params.beta:
        rhs += (params.beta / M) * grid.inverse_laplacian(grid.partial_xx(phi_n))
    mean_shift = 0.0
    s = _source(grid, forcing, state.time + dt)
    if s is not None:
        rhs += (1.0 / M) * grid.inverse_laplacian(s)
        mean_shift = dt * grid.mean(s)

    problem = ReducedProblem(grid, step_symbol(grid, params, dt, "first_order", electric), phi_n,
                             rhs, mean_shift, _norms(lap_term, ieq_term, nonlocal_term))
    precond = bcp_step_preconditioner(grid, params, dt, phi_n, "first_order", electric)
    d, report = _solve(problem, precond, None, tol, max_iter, "step_first_order")
    phi_new = phi_n + d

    U_new = U_n + 2.0 * phi_n * d
    w = -eps2 * grid.laplacian(phi_new) + phi_n * U_new + alpha * grid.inverse_laplacian(phi_new)
    new_state = BcpState(grid, phi_new, U_new, phi_n, U_n, state.time + dt, state.step_index + 1)
    dissipation = -dt * M * grid.h1_seminorm_sq(w)
    if not (electric and params.beta):
        dissipation -= energy_quadratized(grid, d, U_new - U_n, params)
    return StepOutput(new_state, w, report, discrete_energy_cn(state, params),
                      discrete_energy_cn(new_state, params), dissipation, "first_order")


STEPPERS = {"cn": step_cn, "bdf2": step_bdf2, "cn-electric": step_cn_electric}


def advance(state: BcpState, params: ModelParams, dt: float, scheme: str = "cn",
            forcing: Optional[Forcing] = None, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> StepOutput:
    """One step of ``scheme``, bootstrapping with the first-order step when needed."""
    if scheme not in STEPPERS:
        raise ValueError(f"unknown BCP scheme {scheme!r}")
    if not state.has_history:
        return step_first_order(state, params, dt, forcing, tol, max_iter,
                                electric=scheme == "cn-electric")
    return STEPPERS[scheme](state, params, dt, forcing, tol, max_iter)
