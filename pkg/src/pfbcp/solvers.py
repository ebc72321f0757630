"""Matrix-free Krylov solvers and Fourier-diagonal preconditioners.

Operators are plain callables mapping an array to an array of the same
shape (a scalar field or a stack of fields).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .model import ModelParams
from .spectral import Grid2D

log = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    method: str = "pcg"


class SolverBreakdown(FloatingPointError):
    """Non-finite values appeared inside a Krylov iteration."""


class StepRejected(RuntimeError):
    """A time step whose linear solve did not converge."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(f"{message} ({report})")
        self.report = report


def pcg_solve(op: Operator, rhs: np.ndarray, precond: Optional[Operator] = None,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              initial_guess: Optional[np.ndarray] = None,
              atol: float = 0.0) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for a self-adjoint positive definite ``op``.

    Stops when ``||rhs - op(x)|| <= max(tol * ||rhs||, atol)``. On
    exhaustion the iterate with the smallest residual is returned with
    ``converged=False``. ``final_residual`` is relative to ``||rhs||``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    precond = precond or (lambda r: r)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm <= atol:
        return np.zeros_like(rhs), SolveReport(0, 0.0, True)
    tol = max(tol, atol / bnorm)

    x = np.zeros_like(rhs) if initial_guess is None else np.array(initial_guess, dtype=float)
    r = rhs - op(x) if initial_guess is not None else rhs.copy()
    rel = float(np.linalg.norm(r)) / bnorm
    best_x, best_rel = x.copy(), rel
    if rel <= tol:
        return x, SolveReport(0, rel, True)

    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    if rz == 0.0:
        # residual lies in the preconditioner's null space
        return x, SolveReport(0, rel, False)
    for it in range(1, max_iter + 1):
        q = op(p)
        pq = float(np.vdot(p, q))
        if not np.isfinite(pq) or not np.isfinite(rz):
            raise SolverBreakdown(f"non-finite value in PCG at iteration {it}")
        if pq <= 0.0:
            raise SolverBreakdown(f"operator not positive definite (p.Ap = {pq:.3e}) at iteration {it}")
        a = rz / pq
        x += a * p
        r -= a * q
        rel = float(np.linalg.norm(r)) / bnorm
        if not np.isfinite(rel):
            raise SolverBreakdown(f"non-finite residual in PCG at iteration {it}")
        if rel < best_rel:
            best_x, best_rel = x.copy(), rel
        if rel <= tol:
            # confirm against the true residual; recurrences drift
            true_rel = float(np.linalg.norm(rhs - op(x))) / bnorm
            if true_rel <= tol:
                return x, SolveReport(it, true_rel, True)
            r = rhs - op(x)
        z = precond(r)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_rel = float(np.linalg.norm(rhs - op(best_x))) / bnorm
    return best_x, SolveReport(max_iter, true_rel, true_rel <= tol)


def gmres_solve(op: Operator, rhs: np.ndarray, precond: Optional[Operator] = None,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                initial_guess: Optional[np.ndarray] = None, atol: float = 0.0,
                restart: int = 60, refinements: int = 3) -> tuple[np.ndarray, SolveReport]:
    """Restarted GMRES (scipy) for operators that fail the symmetry audit.

    scipy monitors a preconditioned residual, so the true residual is
    recomputed afterwards and the solve is resumed from the current
    iterate (at most ``refinements`` times) until it meets the tolerance.
    """
    shape = rhs.shape
    n = rhs.size
    bnorm = float(np.linalg.norm(rhs))
    if bnorm <= atol:
        return np.zeros_like(rhs), SolveReport(0, 0.0, True, "gmres")
    tol = max(tol, atol / bnorm)
    A = LinearOperator((n, n), matvec=lambda v: op(v.reshape(shape)).ravel(), dtype=float)
    M = None
    if precond is not None:
        M = LinearOperator((n, n), matvec=lambda v: precond(v.reshape(shape)).ravel(), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x = np.zeros(n) if initial_guess is None else np.asarray(initial_guess, dtype=float).ravel().copy()
    rel = float(np.linalg.norm(rhs.ravel() - A.matvec(x))) / bnorm
    inner_tol = tol
    for _ in range(refinements + 1):
        if rel <= tol or count[0] >= max_iter:
            break
        x, _info = gmres(A, rhs.ravel(), x0=x, rtol=inner_tol, atol=0.0, restart=restart,
                         maxiter=max(1, (max_iter - count[0]) // restart + 1), M=M,
                         callback=cb, callback_type="pr_norm")
        if not np.all(np.isfinite(x)):
            raise SolverBreakdown("non-finite value in GMRES solution")
        rel = float(np.linalg.norm(rhs.ravel() - A.matvec(x))) / bnorm
        inner_tol *= 0.1
    return x.reshape(shape), SolveReport(count[0], rel, rel <= tol, "gmres")


def symmetry_audit(op: Operator, shape: tuple, inner: Optional[Callable] = None,
                   n_pairs: int = 10, seed: int = 0,
                   sample: Optional[Callable] = None) -> float:
    """Largest relative asymmetry ``|(Ax, y) - (x, Ay)| / (|Ax||y|)`` over random pairs."""
    rng = np.random.default_rng(seed)
    inner = inner or (lambda a, b: float(np.vdot(a, b)))
    sample = sample or (lambda: rng.standard_normal(shape))
    worst = 0.0
    for _ in range(n_pairs):
        x, y = sample(), sample()
        ax, ay = op(x), op(y)
        scale = np.sqrt(inner(ax, ax) * inner(y, y)) + np.sqrt(inner(ay, ay) * inner(x, x))
        worst = max(worst, abs(inner(ax, y) - inner(x, ay)) / max(scale, 1e-300))
    return worst


def assemble_dense(op: Operator, shape: tuple) -> np.ndarray:
    """Dense matrix of a linear operator, one unit vector at a time (small grids only)."""
    n = int(np.prod(shape))
    A = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        A[:, j] = op(e.reshape(shape)).ravel()
        e[j] = 0.0
    return A


# -- preconditioners ---------------------------------------------------------

def inverse_laplacian_coefficient(params: ModelParams, dt: float, scheme: str = "cn") -> float:
    """Weight of ``(-lap)^{-1}`` in the reduced step operator of each scheme."""
    m = params.mobility
    base = {"cn": 2.0 / (m * dt), "bdf2": 3.0 / (2.0 * m * dt), "first_order": 1.0 / (m * dt)}
    try:
        return base[scheme] + params.alpha
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None


def step_symbol(grid: Grid2D, params: ModelParams, dt: float, scheme: str = "cn",
                electric: bool = False, inv_lap_coeff: Optional[float] = None) -> np.ndarray:
    """Fourier symbol of the constant-coefficient part of the reduced step operator."""
    a = inverse_laplacian_coefficient(params, dt, scheme) if inv_lap_coeff is None else inv_lap_coeff
    sym = a * grid.inv_k2 + params.epsilon**2 * grid.k2
    if electric and params.beta:
        sym = sym + (params.beta / params.mobility) * grid.kx2 * grid.inv_k2
    return sym


def _diagonal_inverse(grid: Grid2D, symbol: np.ndarray) -> Operator:
    inv = np.zeros_like(symbol)
    nz = symbol > 0
    inv[nz] = 1.0 / symbol[nz]
    inv[0, 0] = 0.0  # solves live on the mean-zero subspace

    def apply(r: np.ndarray) -> np.ndarray:
        return grid.apply_symbol(r, inv)

    return apply


def bcp_step_preconditioner(grid: Grid2D, params: ModelParams, dt: float,
                            phi_star: np.ndarray, scheme: str = "cn",
                            electric: bool = False) -> Operator:
    """Exact inverse of the step operator with ``phi_star`` frozen at its mean.

    The reduced operator carries ``2 * phi_star**2``; here that becomes
    ``2 * mean(phi_star)**2``. Acts on mean-zero fields.
    """
    c = grid.mean(phi_star)
    symbol = step_symbol(grid, params, dt, scheme, electric) + 2.0 * c * c
    return _diagonal_inverse(grid, symbol)


def ns_phase_coefficient(params: ModelParams, dt: float) -> float:
    return 2.0 / (params.lam * params.mobility * dt) + params.alpha


def ns_block_preconditioner(grid: Grid2D, params: ModelParams, dt: float,
                            phi_star: np.ndarray) -> Operator:
    """Block-diagonal preconditioner for the coupled ``(phi, u~)`` step.

    Block 1 inverts ``(2/(lam M dt) + alpha)(-lap)^{-1} - eps^2 lap + 2 c^2``;
    block 2 inverts ``1/(2 dt) - (nu/4) lap`` on each velocity component.
    Input and output are stacks ``(3, ny, nx)``.
    """
    c = grid.mean(phi_star)
    phase = _diagonal_inverse(
        grid, ns_phase_coefficient(params, dt) * grid.inv_k2 + params.epsilon**2 * grid.k2 + 2.0 * c * c)
    vel_inv = 1.0 / (1.0 / (2.0 * dt) + 0.25 * params.nu * grid.k2)

    def apply(r: np.ndarray) -> np.ndarray:
        out = np.empty_like(r)
        out[0] = phase(r[0])
        out[1] = grid.apply_symbol(r[1], vel_inv)
        out[2] = grid.apply_symbol(r[2], vel_inv)
        return out

    return apply
