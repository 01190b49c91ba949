"""Density carried as a field under the linear guidance flow (V = 0).

For free evolution the wavefunction is a finite sum of Fourier modes with
known time dependence, so velocities are available at any point and time.
The ratio f = rho/|psi|^2 is constant along trajectories; the field value at
a node x and time t is therefore

    rho(x, t) = f0(X0) |psi(x, t)|^2,   X0 = foot of the trajectory through x,

with X0 found by tracing the trajectory back to t = 0 with adaptive
Dormand-Prince steps. No grid interpolation enters, so the fine-grained
functionals are conserved up to the trajectory tolerance and quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .fields import Grid, PhysicalParams

DensityFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModeExpansion:
    """``psi(x, t) = sum_m coef_m exp(i (k_m . x - omega_m t))``."""

    kvec: np.ndarray  # (K, dim)
    coef: np.ndarray  # (K,)
    omega: np.ndarray  # (K,)
    params: PhysicalParams = PhysicalParams()

    @classmethod
    def from_grid(
        cls,
        psi0: np.ndarray,
        grid: Grid,
        params: PhysicalParams = PhysicalParams(),
        rel_cut: float = 1e-13,
    ) -> ModeExpansion:
        """Keep the Fourier modes of ``psi0`` above ``rel_cut`` times the largest."""
        grid.check(psi0, "psi0")
        c = np.fft.fftn(psi0) / grid.size
        keep = np.abs(c) > rel_cut * np.abs(c).max()
        ks = np.meshgrid(*([grid.k] * grid.dim), indexing="ij")
        kvec = np.column_stack([kk[keep] for kk in ks])
        omega = params.hbar * np.sum(kvec**2, axis=1) / (2.0 * params.mass)
        return cls(kvec, c[keep], omega, params)

    @property
    def n_modes(self) -> int:
        return len(self.coef)

    def psi(self, points: np.ndarray, t: float) -> np.ndarray:
        """Evaluate at ``points`` of shape ``(P, dim)``."""
        phase = points @ self.kvec.T - self.omega * t
        return np.exp(1j * phase) @ self.coef

    def on_grid(self, grid: Grid, t: float) -> np.ndarray:
        return self.psi(grid_points(grid), t).reshape(grid.shape)


def grid_points(grid: Grid) -> np.ndarray:
    return np.column_stack([c.ravel() for c in grid.coords])


def trace_back(
    expansion: ModeExpansion,
    points: np.ndarray,
    t: float,
    tol: float = 1e-8,
    core_floor: float = 1e-4,
) -> np.ndarray:
    """Foot points at t = 0 of the trajectories through ``points`` at time ``t``.

    ``core_floor`` (relative to the mean |psi|^2 of the mode sum) bounds the
    velocity denominator inside vortex cores.
    """
    mean_abs2 = float(np.sum(np.abs(expansion.coef) ** 2))
    scale = expansion.params.hbar / expansion.params.mass
    return kernels.trace_modes(
        points,
        t,
        0.0,
        expansion.kvec,
        expansion.coef,
        expansion.omega,
        scale,
        core_floor * mean_abs2,
        tol,
    )


def transported_density(
    expansion: ModeExpansion,
    rho0: DensityFn,
    grid: Grid,
    t: float,
    tol: float = 1e-8,
    core_floor: float = 1e-4,
) -> np.ndarray:
    """Field-evolved density on the grid at time ``t``.

    ``rho0`` maps points ``(P, dim)`` to the initial density there.
    """
    pts = grid_points(grid)
    abs2_t = np.abs(expansion.psi(pts, t)) ** 2
    if t == 0:
        return np.asarray(rho0(pts), dtype=float).reshape(grid.shape)
    foot = trace_back(expansion, pts, t, tol=tol, core_floor=core_floor)
    abs2_0 = np.abs(expansion.psi(foot, 0.0)) ** 2
    f0 = np.asarray(rho0(foot), dtype=float) / np.maximum(abs2_0, 1e-300)
    return (f0 * abs2_t).reshape(grid.shape)
