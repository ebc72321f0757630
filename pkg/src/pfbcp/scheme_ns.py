"""Crank-Nicolson IEQ scheme for the hydrodynamically coupled model.

Step 1 solves a coupled linear system for the phase increment and the
intermediate velocity ``u~^{n+1}``; Step 2 projects ``u~^{n+1}`` onto
divergence-free fields and updates the pressure.

The coupled Step-1 operator is not self-adjoint (skew advection, and the
two coupling blocks are not mutual adjoints after ``(-lap)^{-1}`` is
applied to the phase row). A symmetry audit runs the first time a
configuration is seen; when it fails, GMRES replaces PCG.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import ModelParams, NsState, discrete_energy_ns
from .solvers import (DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, StepRejected, gmres_solve,
                      ns_block_preconditioner, ns_phase_coefficient, pcg_solve, symmetry_audit)
from .spectral import Grid2D

log = logging.getLogger(__name__)

NsForcing = Callable[[float], tuple]

# a self-adjoint operator audits at rounding level; anything above that is structural
SYMMETRY_TOL = 1e-13

_method_cache: dict = {}


@dataclass
class NsStepOutput:
    new_state: NsState
    intermediate_velocity: np.ndarray
    chemical_potential: np.ndarray
    solve_report: SolveReport
    energy_before: float
    energy_after: float
    dissipation_rhs: float


def skew_advection(grid: Grid2D, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``B(u, v) = (u.grad) v + (div u) v / 2`` in a discretely skew form.

    Evaluated as the average of the advective and conservative forms,
    ``[u_j d_j v_i + d_j(u_j v_i)] / 2``, which equals the expression
    above in the continuum and satisfies ``(B(u, v), v) = 0`` exactly
    because the spectral derivative is skew-adjoint.
    """
    u, v = grid.check(u), grid.check(v)
    out = np.empty_like(v)
    for i in range(2):
        grad_vi = grid.gradient(v[i])
        advective = grid.multiply(u[0], grad_vi[0]) + grid.multiply(u[1], grad_vi[1])
        flux = np.stack([grid.multiply(u[0], v[i]), grid.multiply(u[1], v[i])])
        out[i] = 0.5 * (advective + grid.divergence(flux))
    return out


def step2_projection(grid: Grid2D, u_tilde: np.ndarray, pressure_n: np.ndarray,
                     dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Pressure-correction projection: returns ``(u^{n+1}, p^{n+1})``.

    ``u~ = u^{n+1} + (dt/2) grad q`` with ``div u^{n+1} = 0``, and the
    pressure increment is ``p^{n+1} - p^n = q``.
    """
    w, q0 = grid.project_divergence_free(u_tilde)
    q = (2.0 / dt) * q0
    p_new = pressure_n + q
    return w, p_new - p_new.mean()


class _CoupledSystem:
    """Increment form of Step 1 on the stack ``(d, e_x, e_y)``.

    ``d = phi^{n+1} - phi^n`` (its mean is fixed by the mass balance) and
    ``e = u~^{n+1} - u^n``. The phase row is ``(2/lam)(-lap)^{-1}`` times
    the phase equation, restricted to mean-zero fields; the momentum row
    is half the momentum equation.
    """

    def __init__(self, grid: Grid2D, params: ModelParams, dt: float,
                 phi_star: np.ndarray, u_star: np.ndarray):
        self.grid, self.params, self.dt = grid, params, dt
        self.phi_star, self.u_star = phi_star, u_star
        self.phi_star_sq = phi_star * phi_star
        self.phase_symbol = (ns_phase_coefficient(params, dt) * grid.inv_k2
                             + params.epsilon**2 * grid.k2)
        self.flux_coeff = 1.0 / (params.lam * params.mobility)

    def s_operator(self, d: np.ndarray) -> np.ndarray:
        """Linear part of the chemical potential per unit ``lam``: ``w = w_n + lam*S(d)``."""
        g, p = self.grid, self.params
        return (-0.5 * p.epsilon**2 * g.laplacian(d) + self.phi_star_sq * d
                + 0.5 * p.alpha * g.inverse_laplacian(d))

    def apply(self, x: np.ndarray) -> np.ndarray:
        g, p = self.grid, self.params
        d = x[0] - x[0].mean()
        e = x[1:]
        out = np.empty_like(x)
        phase = (g.apply_symbol(d, self.phase_symbol) + 2.0 * self.phi_star_sq * d
                 + self.flux_coeff * g.inverse_laplacian(g.divergence(self.phi_star * e)))
        out[0] = phase - phase.mean()
        lap_e = np.stack([g.laplacian(c) for c in e])
        force = self.phi_star * g.gradient(self.s_operator(d))
        out[1:] = (e / (2.0 * self.dt) + 0.25 * skew_advection(g, self.u_star, e)
                   - 0.25 * p.nu * lap_e + 0.5 * p.lam * force)
        return out


def _extrapolations(state: NsState):
    if state.has_history:
        return (1.5 * state.phi_n - 0.5 * state.phi_nm1,
                1.5 * state.velocity_n - 0.5 * state.velocity_nm1)
    # bootstrap: lagged values give a locally second-order first step
    return state.phi_n, state.velocity_n


def _choose_method(system: _CoupledSystem, method: str) -> str:
    if method in ("pcg", "gmres"):
        return method
    if method != "auto":
        raise ValueError(f"unknown coupled solver {method!r}")
    g, p = system.grid, system.params
    key = (g.nx, g.ny, g.length_x, g.length_y, p, system.dt)
    if key not in _method_cache:
        asym = symmetry_audit(system.apply, (3,) + g.shape, n_pairs=4)
        chosen = "pcg" if asym <= SYMMETRY_TOL else "gmres"
        if chosen == "gmres":
            log.info("coupled step operator is not symmetric (audit %.2e); using GMRES", asym)
        _method_cache[key] = chosen
    return _method_cache[key]


def step1_coupled(state: NsState, params: ModelParams, dt: float,
                  forcing: Optional[NsForcing] = None, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER, method: str = "auto"):
    """Coupled phase/momentum solve; returns ``(phi^{n+1}, u~^{n+1}, w^{n+1/2}, U^{n+1}, report)``."""
    grid, lam, M = state.grid, params.lam, params.mobility
    eps2, alpha = params.epsilon**2, params.alpha
    phi_n, U_n, u_n, p_n = state.phi_n, state.u_aux_n, state.velocity_n, state.pressure_n
    phi_star, u_star = _extrapolations(state)
    system = _CoupledSystem(grid, params, dt, phi_star, u_star)

    lap_term = eps2 * grid.laplacian(phi_n)
    ieq_term = phi_star * U_n
    nonlocal_term = alpha * grid.inverse_laplacian(phi_n)
    w_n = lam * (-lap_term + ieq_term + nonlocal_term)

    mean_shift = 0.0
    phi_src = mom_src = None
    if forcing is not None:
        phi_src, mom_src = forcing(state.time + 0.5 * dt)
        phi_src, mom_src = grid.check(phi_src), grid.check(mom_src)
        mean_shift = dt * grid.mean(phi_src)

    rhs = np.empty((3,) + grid.shape)
    phase = -(2.0 / lam) * w_n - 2.0 * system.flux_coeff * grid.inverse_laplacian(
        grid.divergence(phi_star * u_n))
    phase -= 2.0 * system.phi_star_sq * mean_shift
    if phi_src is not None:
        phase += 2.0 * system.flux_coeff * grid.inverse_laplacian(phi_src)
    rhs[0] = phase - phase.mean()
    lap_u = np.stack([grid.laplacian(c) for c in u_n])
    mom = (-skew_advection(grid, u_star, u_n) + params.nu * lap_u - grid.gradient(p_n)
           - phi_star * grid.gradient(w_n + lam * system.phi_star_sq * mean_shift))
    if mom_src is not None:
        mom = mom + mom_src
    rhs[1:] = 0.5 * mom

    precond = ns_block_preconditioner(grid, params, dt, phi_star)
    guess = None
    if state.has_history:
        guess = np.concatenate([(phi_n - state.phi_nm1)[None], u_n - state.velocity_nm1])
    scale = np.linalg.norm(rhs) + (2.0 / lam) * np.linalg.norm(w_n) + np.linalg.norm(lap_u)
    atol = 1e-14 * scale
    chosen = _choose_method(system, method)
    solver = pcg_solve if chosen == "pcg" else gmres_solve
    x, report = solver(system.apply, rhs, precond, tol=tol, max_iter=max_iter,
                       initial_guess=guess, atol=atol)
    if not report.converged:
        raise StepRejected(f"step1_coupled: {chosen} did not converge", report)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("step1_coupled: non-finite solution")

    d = mean_shift + (x[0] - x[0].mean())
    phi_new = phi_n + d
    u_tilde = u_n + x[1:]
    w_half = w_n + lam * system.s_operator(d)
    U_new = U_n + 2.0 * phi_star * d
    return phi_new, u_tilde, w_half, U_new, report


def step_ns(state: NsState, params: ModelParams, dt: float,
            forcing: Optional[NsForcing] = None, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER, method: str = "auto") -> NsStepOutput:
    """One full step (coupled solve plus projection) of the coupled scheme.

    Without history the extrapolations fall back to the current values,
    which is how the two-level history is bootstrapped.
    """
    grid = state.grid
    phi_new, u_tilde, w_half, U_new, report = step1_coupled(
        state, params, dt, forcing, tol, max_iter, method)
    u_new, p_new = step2_projection(grid, u_tilde, state.pressure_n, dt)
    new_state = NsState(grid=grid, phi_n=phi_new, u_aux_n=U_new, phi_nm1=state.phi_n,
                        u_aux_nm1=state.u_aux_n, time=state.time + dt,
                        step_index=state.step_index + 1, velocity_n=u_new,
                        velocity_nm1=state.velocity_n, pressure_n=p_new)
    u_half = 0.5 * (u_tilde + state.velocity_n)
    dissipation = -dt * (params.mobility * grid.h1_seminorm_sq(w_half)
                         + params.nu * grid.h1_seminorm_sq(u_half))
    return NsStepOutput(new_state, u_tilde, w_half, report,
                        discrete_energy_ns(state, params, dt),
                        discrete_energy_ns(new_state, params, dt), dissipation)
