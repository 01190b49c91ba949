"""Particle ensembles: sampling, guidance-law advection and density deposition.

A node's cell is ``[x_i - dx/2, x_i + dx/2)`` in every direction. Sampling,
histogram deposition and the KS monitor all use this same cell-constant
picture of a gridded density, so that sampling a density and depositing the
result reproduces it up to sampling noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import IO

import numpy as np

from . import kernels
from .fields import Grid, passing_mask

_KDE_KINDS = ("histogram", "gaussian_kde")


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle positions, ``(N,)`` in 1D or ``(N, 2)`` in 2D, plus their seed."""

    positions: np.ndarray
    seed: int = 0

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else int(self.positions.shape[1])

    def with_positions(self, positions: np.ndarray) -> ParticleEnsemble:
        return ParticleEnsemble(positions, self.seed)


@dataclass(frozen=True)
class DensityEstimator:
    """How particles become a gridded density.

    ``bandwidth=None`` selects Silverman's rule at every deposition.
    """

    kind: str = "gaussian_kde"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in _KDE_KINDS:
            raise ValueError(f"estimator must be one of {_KDE_KINDS}, got {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")


SAMPLING_STREAM = 0
PHASE_STREAM = 1


def seeded_rng(seed: int, stream: int = SAMPLING_STREAM) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``.

    Philox is counter based: draw i of a stream depends only on (seed, stream, i).
    """
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample(density: np.ndarray, grid: Grid, n_particles: int, seed: int) -> ParticleEnsemble:
    """Draw i.i.d. positions from a gridded density by inverse CDF.

    The density is read as constant on each node's cell, so the CDF is
    piecewise linear. Particle ``i`` consumes draws ``(dim+1)*i`` onwards of
    the seeded Philox stream (one to pick the cell by inverse CDF over the
    flattened cells, ``dim`` to place it uniformly inside).
    """
    grid.check(density, "density")
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    d = np.asarray(density, dtype=float).ravel()
    if not np.all(np.isfinite(d)):
        raise ValueError("density has non-finite values")
    if np.any(d < 0):
        raise ValueError("density has negative values")
    total = d.sum() * grid.cell_volume
    if total <= 0:
        raise ValueError("density is identically zero")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"density integrates to {total!r}, expected 1 within 1e-9")

    u = seeded_rng(seed).random((n_particles, grid.dim + 1))
    cdf = np.cumsum(d)
    cdf /= cdf[-1]
    cell = np.searchsorted(cdf, u[:, 0], side="right")
    cell = np.minimum(cell, d.size - 1)
    idx = np.unravel_index(cell, grid.shape)
    cols = [(i - 0.5 + u[:, 1 + ax]) * grid.dx for ax, i in enumerate(idx)]
    pos = grid.wrap(np.column_stack(cols))
    if grid.dim == 1:
        pos = pos[:, 0].copy()
    return ParticleEnsemble(pos, int(seed))


def advect(ens: ParticleEnsemble, v: np.ndarray, grid: Grid, dt: float) -> ParticleEnsemble:
    """One RK4 step along the frozen gridded velocity ``v`` (cubic interpolation)."""
    if v.shape != (grid.dim, *grid.shape):
        raise ValueError(f"velocity has shape {v.shape}, expected {(grid.dim, *grid.shape)}")
    return ens.with_positions(kernels.advect_rk4(ens.positions, v, grid.dx, grid.length, dt))


def silverman_bandwidth(counts: np.ndarray, grid: Grid) -> float:
    """``1.06 sigma N^(-1/5)`` in 1D; the normal-reference rule ``sigma N^(-1/6)`` in 2D.

    sigma is the circular (wrap-safe) standard deviation, computed from the
    binned particle counts and capped at that of a uniform distribution on
    the period.
    """
    n = int(counts.sum())
    w = 2.0 * np.pi / grid.length
    phase = _unit_phase(grid)
    cap = grid.length / np.sqrt(12.0)
    sig = []
    for ax in range(grid.dim):
        marginal = counts.sum(axis=tuple(a for a in range(grid.dim) if a != ax)) if grid.dim > 1 else counts
        r = abs(np.dot(marginal, phase)) / n
        s = np.sqrt(-2.0 * np.log(r)) / w if r > 0 else cap
        sig.append(min(s, cap))
    sigma = float(np.mean(sig))
    if grid.dim == 1:
        h = 1.06 * sigma * n ** (-1.0 / 5.0)
    else:
        h = sigma * n ** (-1.0 / 6.0)
    return h if h > 0 else grid.dx


@lru_cache(maxsize=8)
def _unit_phase(grid: Grid) -> np.ndarray:
    return np.exp(1j * (2.0 * np.pi / grid.length) * grid.x)


# exp(-x) is exactly 0.0 in double precision beyond this
_EXP_UNDERFLOW = 746.0


def _periodic_gaussian(grid: Grid, h: float) -> np.ndarray:
    d = np.where(grid.x < 0.5 * grid.length, grid.x, grid.x - grid.length)
    if 0.5 * (0.5 * grid.length / h) ** 2 > _EXP_UNDERFLOW:
        reps = 0  # every image term would underflow to exactly zero
    else:
        reps = int(np.ceil(8.0 * h / grid.length)) + 1
    k1 = np.zeros(grid.n)
    for m in range(-reps, reps + 1):
        k1 += np.exp(-0.5 * ((d + m * grid.length) / h) ** 2)
    k1 /= k1.sum() * grid.dx
    if grid.dim == 1:
        return k1
    return np.multiply.outer(k1, k1)


def deposit_counts(ens: ParticleEnsemble, grid: Grid) -> np.ndarray:
    """Integer particle count per node cell, shaped like the grid."""
    return kernels.deposit_counts(ens.positions, grid.dx, grid.n).reshape(grid.shape)


def density_from_counts(counts: np.ndarray, grid: Grid, est: DensityEstimator) -> tuple[np.ndarray, float | None]:
    """Gridded density from cell counts, plus the KDE bandwidth actually used."""
    hist = counts / (counts.sum() * grid.cell_volume)
    if est.kind == "histogram":
        return hist, None
    h = est.bandwidth if est.bandwidth is not None else silverman_bandwidth(counts, grid)
    kern = _periodic_gaussian(grid, h)
    rho = np.fft.irfftn(np.fft.rfftn(hist) * np.fft.rfftn(kern), s=grid.shape, axes=tuple(range(grid.dim))) * grid.cell_volume
    np.maximum(rho, 0.0, out=rho)
    rho /= rho.sum() * grid.cell_volume
    return rho, h


def estimate_density(
    ens: ParticleEnsemble,
    grid: Grid,
    est: DensityEstimator = DensityEstimator(),
) -> np.ndarray:
    """Deposit the empirical density on the grid; integrates to 1.

    Counts are integers, so the result does not depend on particle order.
    """
    return density_from_counts(deposit_counts(ens, grid), grid, est)[0]


def f_q_field(rho: np.ndarray, psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Ratio ``rho / |psi|^2``; sub-floor nodes carry the neutral value 1."""
    grid.check(rho, "rho")
    grid.check(psi, "psi")
    abs2 = psi.real**2 + psi.imag**2
    mask = passing_mask(abs2)
    return np.where(mask, rho / np.where(mask, abs2, 1.0), 1.0)


def cell_cdf(density: np.ndarray, grid: Grid):
    """Breakpoints and CDF values of a 1D cell-constant density on ``[0, L]``."""
    d = np.asarray(density, dtype=float)
    edges = np.concatenate([[0.0], (np.arange(grid.n) + 0.5) * grid.dx, [grid.length]])
    vals = np.concatenate([d, [d[0]]])
    widths = np.diff(edges)
    cdf = np.concatenate([[0.0], np.cumsum(vals * widths)])
    return edges, cdf / cdf[-1]


def ks_distance(positions: np.ndarray, density: np.ndarray, grid: Grid) -> float:
    """Kolmogorov-Smirnov distance between 1D particles and a gridded density."""
    if grid.dim != 1:
        raise ValueError("ks_distance is defined for 1D grids only")
    edges, cdf = cell_cdf(density, grid)
    x = np.sort(positions)
    f = np.interp(x, edges, cdf)
    n = len(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def write_ensemble_snapshot(fh: IO[str], ens: ParticleEnsemble, t: float) -> None:
    fh.write(f"# N={ens.n_particles} seed={ens.seed} t={t:.17g}\n")
    np.savetxt(fh, ens.positions.reshape(ens.n_particles, -1), fmt="%.17g")


def read_ensemble_snapshot(fh: IO[str] | str) -> tuple[ParticleEnsemble, float]:
    if isinstance(fh, str):
        with open(fh) as f:
            return read_ensemble_snapshot(f)
    header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    pos = np.loadtxt(fh, ndmin=2)
    if pos.shape[1] == 1:
        pos = pos[:, 0]
    if pos.shape[0] != int(meta["N"]):
        raise ValueError("ensemble snapshot header does not match its rows")
    return ParticleEnsemble(pos, int(meta["seed"])), float(meta["t"])
