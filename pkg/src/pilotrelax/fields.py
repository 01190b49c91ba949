"""Periodic grids, spectral derivatives and Bohmian kinematics.

Fields are plain numpy arrays shaped ``grid.shape``; vector fields carry a
leading axis of length ``grid.dim``. Every derivative is taken with real
FFTs applied separately to the real and imaginary parts of a complex field,
so that a real wavefunction produces an identically zero current.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import IO

import numpy as np

#: relative density floor; nodes with |psi|^2 < FLOOR_REL * max|psi|^2 are excluded
FLOOR_REL = 1e-12


class GridMismatchError(ValueError):
    """A field does not live on the grid it was paired with."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, length)`` in each of ``dim`` directions."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be > 0, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    @cached_property
    def x(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.n) * self.dx

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to ``shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*([self.x] * self.dim), indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        """Full FFT wavenumber ladder along one axis."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def _rk(self) -> tuple[np.ndarray, ...]:
        # wavenumbers broadcast onto the rfftn layout (last axis halved)
        axes = [self.k] * (self.dim - 1) + [2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def _rk_odd(self) -> tuple[np.ndarray, ...]:
        # first-derivative multipliers: the Nyquist mode has no sign partner
        out = []
        for ax, kk in enumerate(self._rk):
            kk = kk.copy()
            idx = [slice(None)] * self.dim
            idx[ax] = self.n // 2
            kk[tuple(idx)] = 0.0
            out.append(kk)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the full (complex) FFT layout."""
        kk = np.meshgrid(*([self.k] * self.dim), indexing="ij")
        return sum(c * c for c in kk)

    @cached_property
    def _rk2(self) -> np.ndarray:
        return sum(c * c for c in self._rk)

    def check(self, field: np.ndarray, name: str = "field") -> None:
        if field.shape != self.shape:
            raise GridMismatchError(f"{name} has shape {field.shape}, grid expects {self.shape}")

    def wrap(self, positions: np.ndarray) -> np.ndarray:
        """Map positions into ``[0, length)``."""
        out = np.mod(positions, self.length)
        # mod can round up to exactly length for tiny negative inputs
        out[out >= self.length] = 0.0
        return out


@dataclass(frozen=True)
class PhysicalParams:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be strictly positive")


def _rfft(f: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(f)


def _irfft(fh: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.irfftn(fh, s=grid.shape, axes=tuple(range(grid.dim)))


def _real_gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    fh = _rfft(f)
    return np.stack([_irfft(1j * kk * fh, grid) for kk in grid._rk_odd])


def _real_laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return _irfft(-grid._rk2 * _rfft(f), grid)


def spectral_gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient, shape ``(dim, *grid.shape)``.

    Exact (to roundoff) for band-limited periodic fields. Complex input is
    differentiated part by part.
    """
    grid.check(f)
    if np.iscomplexobj(f):
        return _real_gradient(f.real, grid) + 1j * _real_gradient(f.imag, grid)
    return _real_gradient(f, grid)


def spectral_laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    grid.check(f)
    if np.iscomplexobj(f):
        return _real_laplacian(f.real, grid) + 1j * _real_laplacian(f.imag, grid)
    return _real_laplacian(f, grid)


def abs2(psi: np.ndarray) -> np.ndarray:
    """``|psi|^2`` as ``re^2 + im^2`` (the form every module uses)."""
    return psi.real**2 + psi.imag**2


def norm_squared(psi: np.ndarray, grid: Grid) -> float:
    """Quadrature of |psi|^2 over the periodic cell."""
    grid.check(psi, "psi")
    return float(np.sum(psi.real**2 + psi.imag**2) * grid.cell_volume)


def density_floor(abs2: np.ndarray) -> float:
    return FLOOR_REL * float(np.max(abs2)) if abs2.size else 0.0


def passing_mask(abs2: np.ndarray) -> np.ndarray:
    """Nodes whose density clears the relative floor (all False for a zero field)."""
    floor = density_floor(abs2)
    if floor <= 0.0:
        return np.zeros(abs2.shape, dtype=bool)
    return abs2 >= floor


def probability_current(psi: np.ndarray, grid: Grid, params: PhysicalParams = PhysicalParams()) -> np.ndarray:
    """Current density ``(hbar/m) Im(conj(psi) grad psi)``; regular everywhere."""
    grid.check(psi, "psi")
    a, b = psi.real, psi.imag
    return (params.hbar / params.mass) * (a * _real_gradient(b, grid) - b * _real_gradient(a, grid))


def velocity_field(
    psi: np.ndarray,
    grid: Grid,
    params: PhysicalParams = PhysicalParams(),
    v_max: float | None = None,
) -> np.ndarray:
    """Guidance velocity ``(hbar/m) Im(grad psi / psi)``.

    The denominator is floored at ``FLOOR_REL * max|psi|^2``. On sub-floor
    nodes the result is additionally clipped to ``[-v_max, v_max]`` when
    ``v_max`` is given (the runner passes ``dx/dt``).
    """
    abs2 = psi.real**2 + psi.imag**2
    j = probability_current(psi, grid, params)
    floor = density_floor(abs2)
    if floor <= 0.0:
        return np.zeros_like(j)
    mask = abs2 >= floor
    v = j / np.where(mask, abs2, floor)
    if v_max is not None and not mask.all():
        v = np.where(mask, v, np.clip(v, -v_max, v_max))
    return v


def quantum_potential(psi: np.ndarray, grid: Grid, params: PhysicalParams = PhysicalParams()) -> np.ndarray:
    """Bohm potential ``-(hbar^2/2m) lap(R)/R`` without differentiating R.

    Uses ``lap(R)/R = Re(lap(psi)/psi) + |Im(grad(psi)/psi)|^2``, which stays
    smooth through sign changes of a real psi. Sub-floor nodes carry 0.
    """
    grid.check(psi, "psi")
    a, b = psi.real, psi.imag
    abs2 = a * a + b * b
    mask = passing_mask(abs2)
    if not mask.any():
        return np.zeros(grid.shape)
    den = np.where(mask, abs2, 1.0)
    re_lap = (a * _real_laplacian(a, grid) + b * _real_laplacian(b, grid)) / den
    w = (a * _real_gradient(b, grid) - b * _real_gradient(a, grid)) / den
    lap_r_over_r = re_lap + np.sum(w * w, axis=0)
    return np.where(mask, -(params.hbar**2 / (2.0 * params.mass)) * lap_r_over_r, 0.0)


def write_field_snapshot(fh: IO[str], psi: np.ndarray, grid: Grid) -> None:
    """Columns ``x[ y] re_psi im_psi abs2_psi``, one node per line, row-major."""
    grid.check(psi, "psi")
    cols = [c.ravel() for c in grid.coords]
    flat = psi.ravel()
    cols += [flat.real, flat.imag, flat.real**2 + flat.imag**2]
    np.savetxt(fh, np.column_stack(cols), fmt="%.17g")


def read_field_snapshot(fh: IO[str] | str, grid: Grid) -> np.ndarray:
    data = np.loadtxt(fh, ndmin=2)
    if data.shape != (grid.size, grid.dim + 3):
        raise GridMismatchError(f"snapshot shape {data.shape} does not match grid")
    re = data[:, grid.dim]
    im = data[:, grid.dim + 1]
    return (re + 1j * im).reshape(grid.shape)
