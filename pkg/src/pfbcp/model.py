"""Physical parameters, IEQ state containers and energy functionals."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .spectral import Grid2D


@dataclass(frozen=True)
class ModelParams:
    """Constants of the phase-field block copolymer model.

    ``lam`` is the free-energy magnitude (``lambda`` is a Python keyword).
    Defaults are the values used throughout the numerical experiments;
    the mobility is not stated there and defaults to 1.
    """

    epsilon: float = 0.06
    alpha: float = 0.001
    mobility: float = 1.0
    lam: float = 1.0
    nu: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        checks = {
            "epsilon": self.epsilon > 0,
            "mobility": self.mobility > 0,
            "lam": self.lam > 0,
            "nu": self.nu > 0,
            "alpha": self.alpha >= 0,
            "beta": self.beta >= 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not np.isfinite(value):
                raise ValueError(f"invalid model parameter {name}={value!r}")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def double_well(phi):
    return 0.25 * (phi * phi - 1.0) ** 2


def double_well_deriv(phi):
    return phi * (phi * phi - 1.0)


@dataclass
class BcpState:
    """Two-level history ``(phi^n, phi^{n-1}, U^n, U^{n-1})``.

    ``phi_nm1``/``u_aux_nm1`` are ``None`` until the bootstrap step has
    been taken.
    """

    grid: Grid2D
    phi_n: np.ndarray
    u_aux_n: np.ndarray
    phi_nm1: Optional[np.ndarray] = None
    u_aux_nm1: Optional[np.ndarray] = None
    time: float = 0.0
    step_index: int = 0

    @classmethod
    def initial(cls, grid: Grid2D, phi0: np.ndarray, time: float = 0.0) -> "BcpState":
        phi0 = grid.check(phi0).copy()
        return cls(grid=grid, phi_n=phi0, u_aux_n=phi0 * phi0 - 1.0, time=time)

    @property
    def has_history(self) -> bool:
        return self.phi_nm1 is not None


@dataclass
class NsState(BcpState):
    """BCP history plus velocity history and the current pressure."""

    velocity_n: Optional[np.ndarray] = None
    velocity_nm1: Optional[np.ndarray] = None
    pressure_n: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, grid: Grid2D, phi0: np.ndarray, velocity0=None, pressure0=None,
                time: float = 0.0) -> "NsState":
        phi0 = grid.check(phi0).copy()
        u0 = np.zeros((2,) + grid.shape) if velocity0 is None else grid.check(velocity0).copy()
        if u0.shape != (2,) + grid.shape:
            raise ValueError("velocity must have shape (2, ny, nx)")
        p0 = np.zeros(grid.shape) if pressure0 is None else grid.check(pressure0).copy()
        return cls(grid=grid, phi_n=phi0, u_aux_n=phi0 * phi0 - 1.0, time=time,
                   velocity_n=u0, pressure_n=p0 - p0.mean())


def psi_from_phi(grid: Grid2D, phi: np.ndarray) -> np.ndarray:
    """Nonlocal potential: mean-zero solution of ``-lap psi = phi - mean(phi)``."""
    return grid.inverse_laplacian(phi)


def energy_bcp(grid: Grid2D, phi: np.ndarray, params: ModelParams) -> float:
    """Ohta-Kawasaki free energy with gradient, double-well and nonlocal parts."""
    return (0.5 * params.epsilon**2 * grid.h1_seminorm_sq(phi)
            + float(np.sum(double_well(phi))) * grid.cell_area
            + 0.5 * params.alpha * grid.inverse_laplacian_energy(phi))


def energy_quadratized(grid: Grid2D, phi: np.ndarray, u_aux: np.ndarray,
                       params: ModelParams) -> float:
    """Free energy with the double well replaced by ``U**2 / 4``."""
    return (0.5 * params.epsilon**2 * grid.h1_seminorm_sq(phi)
            + 0.25 * grid.inner(u_aux, u_aux)
            + 0.5 * params.alpha * grid.inverse_laplacian_energy(phi))


def kinetic_energy(grid: Grid2D, velocity: np.ndarray) -> float:
    return 0.5 * (grid.inner(velocity[0], velocity[0]) + grid.inner(velocity[1], velocity[1]))


def energy_coupled(grid: Grid2D, velocity: np.ndarray, phi: np.ndarray, u_aux: np.ndarray,
                   params: ModelParams) -> float:
    return kinetic_energy(grid, velocity) + params.lam * energy_quadratized(grid, phi, u_aux, params)


def discrete_energy_cn(state: BcpState, params: ModelParams) -> float:
    """Discrete energy dissipated exactly by the Crank-Nicolson IEQ step."""
    return energy_quadratized(state.grid, state.phi_n, state.u_aux_n, params)


def discrete_energy_bdf2(state: BcpState, params: ModelParams) -> float:
    """Two-level energy ``[Q(phi^n, U^n) + Q(2phi^n - phi^{n-1}, 2U^n - U^{n-1})] / 2``.

    ``Q`` is the quadratized energy. BDF2 steps dissipate this functional
    exactly (up to a non-negative numerical dissipation term). Without
    history it reduces to ``Q(phi^n, U^n)``.
    """
    grid = state.grid
    q = energy_quadratized(grid, state.phi_n, state.u_aux_n, params)
    if not state.has_history:
        return q
    return 0.5 * (q + energy_quadratized(grid, 2.0 * state.phi_n - state.phi_nm1,
                                         2.0 * state.u_aux_n - state.u_aux_nm1, params))


def discrete_energy_ns(state: NsState, params: ModelParams, dt: float) -> float:
    """Coupled discrete energy, including the ``dt**2/8 |grad p|^2`` pressure term."""
    grid = state.grid
    return (energy_coupled(grid, state.velocity_n, state.phi_n, state.u_aux_n, params)
            + dt * dt / 8.0 * grid.grad_norm_sq(state.pressure_n))
