"""Scalar monitors for the approach to rho = |psi|^2.

All logarithmic functionals skip nodes where either density is below its
relative floor and clamp the ratio rho/|psi|^2 to [1e-12, 1e12].
"""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .evolve import NonlinearCoupling
from .fields import FLOOR_REL, Grid, passing_mask

RATIO_MIN = 1e-12
RATIO_MAX = 1e12


@dataclass(frozen=True)
class CoarseGraining:
    cell_factor: int = 1

    def __post_init__(self):
        if self.cell_factor < 1:
            raise ValueError(f"cell_factor must be >= 1, got {self.cell_factor}")

    def check(self, grid: Grid) -> None:
        if grid.n % self.cell_factor:
            raise ValueError(f"cell_factor {self.cell_factor} does not divide n={grid.n}")


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    norm_psi: float
    h_sym: float
    h_val: float
    h_val_coarse: float
    l1_dist: float
    fq_min: float
    fq_max: float
    cont_residual_sup: float
    dh_integrand_max: float
    excluded_mass: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_csv(self) -> str:
        return ",".join(f"{v:.17g}" for v in astuple(self))


def _abs2(psi: np.ndarray) -> np.ndarray:
    return psi.real**2 + psi.imag**2


def both_passing(rho: np.ndarray, abs2: np.ndarray) -> np.ndarray:
    """Nodes where rho and |psi|^2 both clear their relative floors."""
    return passing_mask(abs2) & passing_mask(rho)


def _log_ratio(rho, abs2, mask):
    r = np.where(mask, rho / np.where(mask, abs2, 1.0), 1.0)
    return np.log(np.clip(r, RATIO_MIN, RATIO_MAX))


def h_sym(rho: np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    """``integral (rho - |psi|^2) ln(rho/|psi|^2)``; non-negative node by node."""
    grid.check(rho, "rho")
    abs2 = _abs2(psi)
    mask = both_passing(rho, abs2)
    terms = np.where(mask, (rho - abs2) * _log_ratio(rho, abs2, mask), 0.0)
    return float(np.sum(terms) * grid.cell_volume)


def coarse_grain(f: np.ndarray, grid: Grid, cg: CoarseGraining) -> np.ndarray:
    """Replace every node by the mean over its coarse cell."""
    grid.check(f, "field")
    cg.check(grid)
    c = cg.cell_factor
    if c == 1:
        return f.copy()
    m = grid.n // c
    if grid.dim == 1:
        means = f.reshape(m, c).mean(axis=1)
        return np.repeat(means, c)
    means = f.reshape(m, c, m, c).mean(axis=(1, 3))
    return np.repeat(np.repeat(means, c, axis=0), c, axis=1)


def _h_val_fields(rho: np.ndarray, abs2: np.ndarray, grid: Grid) -> float:
    mask = both_passing(rho, abs2)
    terms = np.where(mask, rho * _log_ratio(rho, abs2, mask), 0.0)
    return float(np.sum(terms) * grid.cell_volume)


def h_valentini(rho: np.ndarray, psi: np.ndarray, grid: Grid, cg: CoarseGraining) -> tuple[float, float]:
    """Fine and coarse-grained ``integral rho ln(rho/|psi|^2)``.

    The coarse value evaluates the same functional on cell-averaged rho and
    cell-averaged |psi|^2; by the log-sum inequality it never exceeds the
    fine value.
    """
    grid.check(rho, "rho")
    cg.check(grid)
    abs2 = _abs2(psi)
    fine = _h_val_fields(rho, abs2, grid)
    coarse = _h_val_fields(coarse_grain(rho, grid, cg), coarse_grain(abs2, grid, cg), grid)
    return fine, coarse


def dh_integrand(f_q: np.ndarray, psi: np.ndarray, coupling: NonlinearCoupling) -> np.ndarray:
    """Pointwise ``2 alpha (1 - f)(f - 1 + ln f) |psi|^2``, never positive.

    Sub-floor nodes contribute 0. f is clamped to [1e-12, 1e12] like the
    ratios elsewhere, so f = 0 and huge f give large finite negative values.
    """
    f = np.clip(np.asarray(f_q, dtype=float), RATIO_MIN, RATIO_MAX)
    abs2 = _abs2(psi)
    mask = passing_mask(abs2)
    val = 2.0 * coupling.alpha * (1.0 - f) * (f - 1.0 + np.log(f)) * abs2
    return np.where(mask, val, 0.0)


def l1_distance(rho: np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    grid.check(rho, "rho")
    return float(np.sum(np.abs(rho - _abs2(psi))) * grid.cell_volume)


def excluded_mass(rho: np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    """Mass of rho sitting on nodes skipped by the logarithmic functionals."""
    mask = both_passing(rho, _abs2(psi))
    return float(np.sum(np.where(mask, 0.0, rho)) * grid.cell_volume)


def fq_range(f_q: np.ndarray, psi: np.ndarray) -> tuple[float, float]:
    mask = passing_mask(_abs2(psi))
    if not mask.any():
        return 1.0, 1.0
    vals = f_q[mask]
    return float(vals.min()), float(vals.max())


__all__ = [
    "FLOOR_REL",
    "CoarseGraining",
    "DiagnosticsRow",
    "coarse_grain",
    "dh_integrand",
    "excluded_mass",
    "fq_range",
    "h_sym",
    "h_valentini",
    "l1_distance",
]
