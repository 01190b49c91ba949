"""Named experiments and the closed-form fields they start from."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .ensemble import PHASE_STREAM, seeded_rng
from .fields import Grid, PhysicalParams

if TYPE_CHECKING:
    from .config import RunConfig

TAIL_LIMIT = 1e-10


def _gaussian_1d(x: np.ndarray, sigma0: float, params: PhysicalParams, t: float, center: float) -> np.ndarray:
    spread = 1.0 + 1j * params.hbar * t / (2.0 * params.mass * sigma0**2)
    amp = (2.0 * np.pi * sigma0**2) ** -0.25 / np.sqrt(spread)
    return amp * np.exp(-((x - center) ** 2) / (4.0 * sigma0**2 * spread))


def gaussian_width(sigma0: float, params: PhysicalParams, t: float) -> float:
    """Position spread of a free Gaussian packet at time ``t``."""
    return sigma0 * math.sqrt(1.0 + (params.hbar * t / (2.0 * params.mass * sigma0**2)) ** 2)


def oracle_free_gaussian(
    grid: Grid,
    sigma0: float,
    params: PhysicalParams = PhysicalParams(),
    t: float = 0.0,
    center: float | None = None,
) -> np.ndarray:
    """Freely spreading Gaussian packet at rest, exact at time ``t``.

    Centred mid-box by default; in 2D it is the product of two 1D packets.
    Raises ``ValueError`` if more than 1e-10 of the probability would sit
    beyond the box edge, where the periodic grid no longer matches the
    open-space solution.
    """
    if sigma0 <= 0:
        raise ValueError("sigma0 must be > 0")
    c = 0.5 * grid.length if center is None else float(center)
    reach = min(c, grid.length - c)
    width = gaussian_width(sigma0, params, t)
    tail = grid.dim * math.erfc(reach / (math.sqrt(2.0) * width))
    if tail > TAIL_LIMIT:
        raise ValueError(f"packet too wide for the box: tail mass {tail:.3g} > {TAIL_LIMIT:g}")
    parts = [_gaussian_1d(xx, sigma0, params, t, c) for xx in grid.coords]
    out = parts[0]
    for p in parts[1:]:
        out = out * p
    return out


def box_mode_vectors(grid: Grid, count: int) -> np.ndarray:
    """Default integer mode vectors: 1..M in 1D, the first M of {0..3}^2 in 2D."""
    if grid.dim == 1:
        return np.arange(1, count + 1).reshape(-1, 1)
    lattice = np.array([(a, b) for a in range(4) for b in range(4)])
    if count > len(lattice):
        raise ValueError(f"at most {len(lattice)} default 2D modes, got {count}")
    return lattice[:count]


def oracle_box_modes(grid: Grid, phases: np.ndarray, modes: np.ndarray | None = None) -> np.ndarray:
    """Equal-weight superposition of periodic plane waves with given phases.

    ``modes`` holds integer wave vectors (wavenumber 2 pi m / L), one row per
    mode; by default :func:`box_mode_vectors`. The result is normalized.
    """
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    count = len(phases)
    if count < 1:
        raise ValueError("need at least one mode")
    m = box_mode_vectors(grid, count) if modes is None else np.asarray(modes, dtype=np.int64).reshape(count, -1)
    if m.shape[1] != grid.dim:
        raise ValueError(f"mode vectors have {m.shape[1]} components, grid is {grid.dim}D")
    if len({tuple(r) for r in m}) != count:
        raise ValueError("repeated modes")
    if np.any(np.abs(m) > grid.n // 2 - 1):
        raise ValueError("mode beyond the resolvable band")
    k0 = 2.0 * np.pi / grid.length
    psi = np.zeros(grid.shape, dtype=complex)
    for row, theta in zip(m, phases):
        arg = sum(k0 * int(mi) * xx for mi, xx in zip(row, grid.coords))
        psi += np.exp(1j * (arg + theta))
    return psi / math.sqrt(count * grid.volume)


def random_phases(seed: int, count: int) -> np.ndarray:
    return seeded_rng(seed, PHASE_STREAM).uniform(0.0, 2.0 * np.pi, count)


def _normalized(d: np.ndarray, grid: Grid) -> np.ndarray:
    return d / (d.sum() * grid.cell_volume)


# initial conditions -------------------------------------------------------


def _gaussian_same(cfg: RunConfig, grid: Grid, params: PhysicalParams):
    psi = math.sqrt(cfg.norm0) * oracle_free_gaussian(grid, cfg.sigma0, params)
    unit = oracle_free_gaussian(grid, cfg.sigma0, params)
    return psi, _normalized(np.abs(unit) ** 2, grid)


def _gaussian_shifted(cfg: RunConfig, grid: Grid, params: PhysicalParams):
    psi = math.sqrt(cfg.norm0) * oracle_free_gaussian(grid, cfg.sigma0, params)
    shift = cfg.sigma0 if cfg.shift is None else cfg.shift
    other = oracle_free_gaussian(grid, cfg.sigma0, params, center=0.5 * grid.length + shift)
    return psi, _normalized(np.abs(other) ** 2, grid)


def _modes_equilibrium(cfg: RunConfig, grid: Grid, params: PhysicalParams):
    psi = oracle_box_modes(grid, random_phases(cfg.seed, cfg.modes))
    return psi, _normalized(np.abs(psi) ** 2, grid)


def _modes_uniform(cfg: RunConfig, grid: Grid, params: PhysicalParams):
    psi = oracle_box_modes(grid, random_phases(cfg.seed, cfg.modes))
    return psi, np.full(grid.shape, 1.0 / grid.volume)


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        from .config import ConfigError

        raise ConfigError(key, message)


def _check_modes(cfg: RunConfig) -> None:
    limit = cfg.n // 2 - 1 if cfg.dim == 1 else 16
    _require(cfg.modes <= limit, "modes", f"at most {limit} for dim={cfg.dim}, n={cfg.n}")


def _check_field_transport(cfg: RunConfig) -> None:
    _check_modes(cfg)
    _require(cfg.potential == "zero", "potential", "field-carried density needs free evolution")


@dataclass(frozen=True)
class ScenarioSpec:
    """How a named experiment starts and evolves.

    ``dynamics`` is ``linear`` or ``nonlinear``; ``density`` is ``particles``
    (an ensemble carries rho) or ``field`` (rho is carried along trajectories
    of the mode expansion, free evolution only).
    """

    name: str
    initial: Callable
    dynamics: str
    density: str = "particles"
    defaults: dict = field(default_factory=dict)
    extra_check: Callable | None = None

    def check(self, cfg: RunConfig) -> None:
        if self.extra_check is not None:
            self.extra_check(cfg)

    def initial_state(self, cfg: RunConfig, grid: Grid, params: PhysicalParams):
        """``(psi0, rho0)`` on the grid; rho0 integrates to 1."""
        return self.initial(cfg, grid, params)


SCENARIOS: dict[str, ScenarioSpec] = {
    s.name: s
    for s in [
        ScenarioSpec(
            "free-gaussian-oracle",
            _gaussian_same,
            "linear",
            defaults=dict(dim=1, n=1024, length=40.0, dt=1e-3, t_end=1.0, N_particles=2000, record_every=100),
        ),
        ScenarioSpec(
            "nonlinear-relax",
            _gaussian_shifted,
            "nonlinear",
            defaults=dict(
                dim=1, n=2048, length=160.0, alpha=0.5, dt=1e-3, t_end=20.0, N_particles=50000, record_every=100
            ),
        ),
        ScenarioSpec(
            "equivariance",
            _modes_equilibrium,
            "nonlinear",
            defaults=dict(
                dim=1, n=256, length=2 * math.pi, alpha=0.0, modes=4, dt=1e-3, t_end=5.0, N_particles=20000,
                record_every=100,
            ),
            extra_check=_check_modes,
        ),
        ScenarioSpec(
            "box-modes-linear",
            _modes_uniform,
            "linear",
            density="field",
            defaults=dict(
                dim=2, n=128, length=2 * math.pi, modes=16, dt=0.01, t_end=4 * math.pi, cg_cell_factor=16,
                record_every=1_000_000, seed=12345,
            ),
            extra_check=_check_field_transport,
        ),
        ScenarioSpec(
            "single-particle-kernel",
            _gaussian_same,
            "nonlinear",
            defaults=dict(
                dim=1, n=1024, length=40.0, alpha=0.5, dt=1e-3, t_end=2.0, N_particles=1, bandwidth=0.4,
                record_every=100,
            ),
        ),
    ]
}


def box_modes_at(
    grid: Grid,
    phases: np.ndarray,
    t: float,
    params: PhysicalParams = PhysicalParams(),
    modes: np.ndarray | None = None,
) -> np.ndarray:
    """:func:`oracle_box_modes` freely evolved to time ``t`` (exact)."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    m = box_mode_vectors(grid, len(phases)) if modes is None else np.asarray(modes).reshape(len(phases), -1)
    k2 = np.sum((2.0 * np.pi * m / grid.length) ** 2, axis=1)
    omega = params.hbar * k2 / (2.0 * params.mass)
    return oracle_box_modes(grid, phases - omega * t, m)
