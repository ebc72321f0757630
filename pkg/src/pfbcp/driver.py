"""Scheme-agnostic time marching shared by the harness and the CLI."""
from __future__ import annotations

from typing import Callable, Iterator, Optional

import numpy as np

from .model import BcpState, ModelParams, NsState
from .scheme_bcp import STEPPERS, advance
from .scheme_ns import step_ns
from .solvers import DEFAULT_MAX_ITER, DEFAULT_TOL
from .spectral import Grid2D

SCHEMES = ("cn", "bdf2", "ns", "cn-electric")


def initial_state(scheme: str, grid: Grid2D, phi0: np.ndarray, velocity0=None, pressure0=None,
                  time: float = 0.0):
    if scheme == "ns":
        return NsState.initial(grid, phi0, velocity0, pressure0, time)
    if scheme not in STEPPERS:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return BcpState.initial(grid, phi0, time)


def make_stepper(scheme: str, params: ModelParams, dt: float, forcing: Optional[Callable] = None,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Return ``step(state) -> output`` for ``scheme``; bootstrapping is automatic."""
    if dt <= 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be positive, got {dt!r}")
    if scheme == "ns":
        return lambda state: step_ns(state, params, dt, forcing, tol, max_iter)
    if scheme not in STEPPERS:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return lambda state: advance(state, params, dt, scheme, forcing, tol, max_iter)


def steps_to_reach(t_end: float, dt: float, t0: float = 0.0, strict: bool = True) -> int:
    """Number of steps of size ``dt`` from ``t0`` to ``t_end``.

    With ``strict`` a ragged final step is an error; otherwise the count is
    rounded to the nearest whole step.
    """
    n = (t_end - t0) / dt
    k = int(round(n))
    if k < 1 or (strict and abs(n - k) > 1e-9 * max(1.0, n)):
        raise ValueError(f"t_end - t0 = {t_end - t0} is not a positive multiple of dt = {dt}")
    return k


def march(state, step, n_steps: int) -> Iterator:
    """Yield the output of each of ``n_steps`` steps, threading the state."""
    for _ in range(n_steps):
        out = step(state)
        state = out.new_state
        yield out
