"""Fourier pseudospectral operators on a doubly periodic 2D grid.

Fields are plain ``numpy`` arrays of shape ``(ny, nx)`` (y is the slow
axis, x the fast one). Vector fields are arrays of shape ``(2, ny, nx)``
holding the x- and y-components.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def wavenumbers(n: int, length: float = TWO_PI) -> np.ndarray:
    """Integer-ordered wavenumbers ``0, 1, ..., n/2, -(n/2-1), ..., -1`` scaled by 2*pi/length."""
    j = np.arange(n)
    k = np.where(j <= n // 2, j, j - n).astype(float)
    return k * (TWO_PI / length)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Uniform periodic collocation grid with cached spectral symbols.

    First derivatives drop the Nyquist coefficient; second-derivative
    symbols keep ``-k**2`` on it.
    """

    nx: int = 128
    ny: int = 128
    length_x: float = TWO_PI
    length_y: float = TWO_PI
    dealias: bool = False
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if n < 4 or n % 2:
                raise ValueError(f"{name} must be even and >= 4, got {n}")
        if self.length_x <= 0 or self.length_y <= 0:
            raise ValueError("domain lengths must be positive")
        set_ = object.__setattr__
        set_(self, "kx", wavenumbers(self.nx, self.length_x))
        set_(self, "ky", wavenumbers(self.ny, self.length_y))

        # half-spectrum (rfft) layouts
        kxr = self.kx[: self.nx // 2 + 1].copy()
        kxr[-1] = abs(kxr[-1])
        KX, KY = np.meshgrid(kxr, self.ky)
        k2 = KX**2 + KY**2
        inv_k2 = np.zeros_like(k2)
        inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]

        d1x = 1j * KX
        d1x[:, -1] = 0.0
        d1y = 1j * KY
        d1y[self.ny // 2, :] = 0.0
        k2_first = np.abs(d1x) ** 2 + np.abs(d1y) ** 2
        inv_k2_first = np.zeros_like(k2_first)
        inv_k2_first[k2_first > 0] = 1.0 / k2_first[k2_first > 0]

        set_(self, "_kx2", KX**2)
        set_(self, "_k2", k2)
        set_(self, "_inv_k2", inv_k2)
        set_(self, "_d1x", d1x)
        set_(self, "_d1y", d1y)
        set_(self, "_inv_k2_first", inv_k2_first)

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def area(self) -> float:
        return self.length_x * self.length_y

    @property
    def cell_area(self) -> float:
        return self.area / (self.nx * self.ny)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of collocation points, each of shape ``(ny, nx)``."""
        x = np.arange(self.nx) * (self.length_x / self.nx)
        y = np.arange(self.ny) * (self.length_y / self.ny)
        return np.meshgrid(x, y)

    @property
    def k2(self) -> np.ndarray:
        """|k|^2 on the half spectrum (Nyquist kept)."""
        return self._k2

    @property
    def kx2(self) -> np.ndarray:
        return self._kx2

    @property
    def inv_k2(self) -> np.ndarray:
        """1/|k|^2 on the half spectrum with the zero mode set to 0."""
        return self._inv_k2

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f

    # -- transforms -------------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(f)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(fh, s=self.shape)

    def apply_symbol(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Multiply the half-spectrum of ``f`` by ``symbol`` and transform back."""
        return self.ifft(symbol * self.fft(f))

    # -- differential operators -------------------------------------------
    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.apply_symbol(self.check(f), -self._k2)

    def inverse_laplacian(self, f: np.ndarray) -> np.ndarray:
        """Mean-zero solution ``v`` of ``-lap v = f - mean(f)``."""
        return self.apply_symbol(self.check(f), self._inv_k2)

    def partial_x(self, f: np.ndarray) -> np.ndarray:
        return self.apply_symbol(self.check(f), self._d1x)

    def partial_y(self, f: np.ndarray) -> np.ndarray:
        return self.apply_symbol(self.check(f), self._d1y)

    def partial_xx(self, f: np.ndarray) -> np.ndarray:
        return self.apply_symbol(self.check(f), -self._kx2)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        fh = self.fft(self.check(f))
        return np.stack([self.ifft(self._d1x * fh), self.ifft(self._d1y * fh)])

    def divergence(self, v: np.ndarray) -> np.ndarray:
        v = self.check(v)
        return self.ifft(self._d1x * self.fft(v[0]) + self._d1y * self.fft(v[1]))

    def project_divergence_free(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split ``v = w + grad(q)`` with ``div w = 0`` exactly; returns ``(w, q)``.

        The Poisson solve uses the same first-derivative symbols as
        ``gradient``/``divergence`` so the discrete divergence vanishes to
        round-off.
        """
        v = self.check(v)
        dh = self._d1x * self.fft(v[0]) + self._d1y * self.fft(v[1])
        qh = -dh * self._inv_k2_first
        q = self.ifft(qh)
        w = np.stack([v[0] - self.ifft(self._d1x * qh), v[1] - self.ifft(self._d1y * qh)])
        return w, q

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Nodal product, optionally dealiased by the 3/2 rule."""
        if not self.dealias:
            return a * b
        return self._dealiased_product(a, b)

    def _dealiased_product(self, a, b):
        ny, nx = self.shape
        my, mx = 3 * ny // 2, 3 * nx // 2
        def pad(f):
            fh = np.fft.fft2(f)
            out = np.zeros((my, mx), dtype=complex)
            hy, hx = ny // 2, nx // 2
            out[:hy, :hx] = fh[:hy, :hx]
            out[:hy, -hx:] = fh[:hy, -hx:]
            out[-hy:, :hx] = fh[-hy:, :hx]
            out[-hy:, -hx:] = fh[-hy:, -hx:]
            return np.fft.ifft2(out).real * (my * mx) / (ny * nx)
        ph = np.fft.fft2(pad(a) * pad(b))
        out = np.zeros((ny, nx), dtype=complex)
        hy, hx = ny // 2, nx // 2
        out[:hy, :hx] = ph[:hy, :hx]
        out[:hy, -hx:] = ph[:hy, -hx:]
        out[-hy:, :hx] = ph[-hy:, :hx]
        out[-hy:, -hx:] = ph[-hy:, -hx:]
        return np.fft.ifft2(out).real * (ny * nx) / (my * mx)

    # -- quadrature -------------------------------------------------------
    def mean(self, f: np.ndarray) -> float:
        return float(np.mean(self.check(f)))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        f, g = self.check(f), self.check(g)
        if f.shape != g.shape:
            raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
        return float(np.sum(f * g)) * self.cell_area

    def l2_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def _spectral_energy(self, fh: np.ndarray, weight: np.ndarray) -> float:
        # rfft halves the spectrum: interior kx columns count twice
        w = np.full(fh.shape[-1], 2.0)
        w[0] = 1.0
        if self.nx % 2 == 0:
            w[-1] = 1.0
        s = np.sum(weight * np.abs(fh) ** 2 * w)
        return float(s) * self.area / (self.nx * self.ny) ** 2

    def l2_norm_spectral(self, f: np.ndarray) -> float:
        """L2 norm from Fourier coefficients (Parseval)."""
        return float(np.sqrt(self._spectral_energy(self.fft(self.check(f)), 1.0)))

    def h1_seminorm_sq(self, f: np.ndarray) -> float:
        """``-(lap f, f)``: squared gradient norm matching ``laplacian``."""
        f = self.check(f)
        if f.ndim == 3:
            return sum(self.h1_seminorm_sq(c) for c in f)
        return self._spectral_energy(self.fft(f), self._k2)

    def h1_seminorm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.h1_seminorm_sq(f)))

    def grad_norm_sq(self, f: np.ndarray) -> float:
        """``||gradient(f)||^2`` using the first-derivative symbols (Nyquist dropped)."""
        fh = self.fft(self.check(f))
        weight = np.abs(self._d1x) ** 2 + np.abs(self._d1y) ** 2
        return self._spectral_energy(fh, weight)

    def inverse_laplacian_energy(self, f: np.ndarray) -> float:
        """``(f, (-lap)^{-1} f)`` = squared gradient norm of the mean-zero potential."""
        return self._spectral_energy(self.fft(self.check(f)), self._inv_k2)

