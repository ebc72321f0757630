"""Per-step verification quantities and a run-level ledger.

The energy identity residual is reported as a rate,
``|(E^{n+1} - E^n)/dt + dissipation|``, and compared against
``tol * max(1, |E|)`` so near-zero energies do not cause false alarms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .model import BcpState, ModelParams, NsState

IDENTITY_EXACT = "exact"
IDENTITY_MONOTONE = "monotone"
IDENTITY_SKIPPED = "skipped"


@dataclass(frozen=True)
class StepDiagnostics:
    time: float
    energy: float
    energy_before: float
    energy_identity_residual: float
    mass: float
    mass_drift: float
    grad_w_norm_sq: float
    solver_iterations: int
    identity_kind: str = IDENTITY_EXACT
    grad_u_norm_sq: float = 0.0
    div_u_norm: float = 0.0

    def __post_init__(self):
        for name in ("time", "energy", "energy_before", "energy_identity_residual", "mass",
                     "mass_drift", "grad_w_norm_sq", "grad_u_norm_sq", "div_u_norm"):
            if not math.isfinite(getattr(self, name)):
                raise FloatingPointError(f"non-finite diagnostic {name}")


def audit_step_bcp(before: BcpState, after, params: ModelParams, dt: float) -> StepDiagnostics:
    """Diagnostics for one step of a BCP stepper.

    Crank-Nicolson steps are checked against their exact dissipation
    identity. BDF2 and first-order steps report the monotonicity margin
    ``max(0, dE/dt)`` instead. Electric-field steps inject energy, so only
    mass is audited and the residual is reported as zero.
    """
    grid = before.grid
    new = after.new_state
    grad_w = grid.h1_seminorm_sq(after.chemical_potential)
    rate = (after.energy_after - after.energy_before) / dt
    if after.scheme == "cn_electric" and params.beta > 0:
        kind, residual = IDENTITY_SKIPPED, 0.0
    elif after.scheme in ("cn", "cn_electric"):
        kind, residual = IDENTITY_EXACT, abs(rate + params.mobility * grad_w)
    else:
        kind, residual = IDENTITY_MONOTONE, max(0.0, rate)
    mass = grid.mean(new.phi_n)
    return StepDiagnostics(new.time, after.energy_after, after.energy_before, residual, mass,
                           mass - grid.mean(before.phi_n), grad_w,
                           after.solve_report.iterations, kind)


def audit_step_ns(before: NsState, after, params: ModelParams, dt: float) -> StepDiagnostics:
    """Diagnostics for one coupled step, with both dissipation terms and ``||div u||``."""
    grid = before.grid
    new = after.new_state
    grad_w = grid.h1_seminorm_sq(after.chemical_potential)
    u_half = 0.5 * (after.intermediate_velocity + before.velocity_n)
    grad_u = grid.h1_seminorm_sq(u_half)
    rate = (after.energy_after - after.energy_before) / dt
    residual = abs(rate + params.mobility * grad_w + params.nu * grad_u)
    mass = grid.mean(new.phi_n)
    return StepDiagnostics(new.time, after.energy_after, after.energy_before, residual, mass,
                           mass - grid.mean(before.phi_n), grad_w,
                           after.solve_report.iterations, IDENTITY_EXACT, grad_u,
                           grid.l2_norm(grid.divergence(new.velocity_n)))


def audit_step(before, after, params: ModelParams, dt: float) -> StepDiagnostics:
    if isinstance(before, NsState):
        return audit_step_ns(before, after, params, dt)
    return audit_step_bcp(before, after, params, dt)


@dataclass(frozen=True)
class LedgerSummary:
    steps: int
    monotonicity_violations: int
    max_identity_residual: float
    max_relative_residual: float
    total_mass_drift: float
    forced: bool


def run_ledger(diagnostics: Iterable[StepDiagnostics], forced: bool = False,
               tol: float = 1e-8) -> LedgerSummary:
    """Fold step diagnostics into a run summary.

    An energy increase larger than ``tol * max(1, |E|)`` counts as a
    monotonicity violation, except in ``forced`` runs where sources may
    legitimately inject energy.
    """
    steps = violations = 0
    max_res = max_rel = 0.0
    start_mass = end_mass = None
    for d in diagnostics:
        steps += 1
        scale = max(1.0, abs(d.energy_before))
        if not forced and d.energy - d.energy_before > tol * scale:
            violations += 1
        max_res = max(max_res, d.energy_identity_residual)
        max_rel = max(max_rel, d.energy_identity_residual / scale)
        if start_mass is None:
            start_mass = d.mass - d.mass_drift
        end_mass = d.mass
    drift = 0.0 if start_mass is None else abs(end_mass - start_mass)
    return LedgerSummary(steps, violations, max_res, max_rel, drift, forced)
