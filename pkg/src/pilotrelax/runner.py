"""The coupled field and ensemble loop, and everything it writes to disk."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, format_config
from .ensemble import (
    DensityEstimator,
    ParticleEnsemble,
    advect,
    density_from_counts,
    deposit_counts,
    f_q_field,
    ks_distance,
    sample,
    write_ensemble_snapshot,
)
from .evolve import NonlinearCoupling, Potential, StepScheme, continuity_residual, linear_step, nonlinear_step
from .fields import Grid, PhysicalParams, norm_squared, velocity_field, write_field_snapshot
from .scenarios import SCENARIOS, oracle_free_gaussian
from .transport import ModeExpansion, transported_density

CSV_NAME = "diagnostics.csv"
SUMMARY_NAME = "summary.txt"


class NumericalAbort(RuntimeError):
    """The wavefunction stopped being finite; ``step`` is the offending step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite wavefunction after step {step}")
        self.step = step


@dataclass
class Record:
    """State handed to an observer at each recorded step."""

    step: int
    t: float
    psi: np.ndarray
    rho: np.ndarray
    f_q: np.ndarray
    ensemble: ParticleEnsemble | None
    row: dg.DiagnosticsRow


@dataclass
class RunResult:
    config: RunConfig
    grid: Grid
    rows: list[dg.DiagnosticsRow]
    psi: np.ndarray
    rho: np.ndarray
    ensemble: ParticleEnsemble | None
    summary: dict[str, object] = field(default_factory=dict)
    out_dir: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


Observer = Callable[[Record], None]


def _record_steps(cfg: RunConfig) -> set[int]:
    n = cfg.n_steps
    return set(range(0, n + 1, cfg.record_every)) | {n}


class _Density:
    """Chooses how rho is produced for the scenario: particles or transported field."""

    def __init__(self, cfg: RunConfig, grid: Grid, params: PhysicalParams, psi0, rho0):
        self.grid = grid
        self.cfg = cfg
        self.bandwidth = cfg.bandwidth
        self.ens: ParticleEnsemble | None = None
        self.expansion: ModeExpansion | None = None
        self.rho0 = rho0
        if SCENARIOS[cfg.scenario].density == "field":
            self.expansion = ModeExpansion.from_grid(psi0, grid, params)
            self._rho0_value = float(rho0.flat[0])
        else:
            self.ens = sample(rho0, grid, cfg.N_particles, cfg.seed)
            self.estimator = DensityEstimator(cfg.estimator, cfg.bandwidth)

    def density(self, t: float) -> np.ndarray:
        if self.ens is None:
            if t == 0.0:
                return self.rho0.copy()
            uniform = self._rho0_value
            return transported_density(
                self.expansion, lambda p: np.full(len(p), uniform), self.grid, t, tol=self.cfg.trace_tol
            )
        rho, self.bandwidth = density_from_counts(deposit_counts(self.ens, self.grid), self.grid, self.estimator)
        return rho


def run_scenario(cfg: RunConfig, observer: Observer | None = None, write: bool = True) -> RunResult:
    """Run one experiment end to end.

    Per step: deposit rho, form f_q, advance psi (f_q frozen), recompute the
    guidance velocity from the new psi and move the particles. Rows are
    recorded at step 0, every ``record_every`` steps and at the final step.
    """
    spec = SCENARIOS[cfg.scenario]
    grid = Grid(cfg.dim, cfg.n, cfg.length)
    params = PhysicalParams(cfg.hbar, cfg.mass)
    scheme = StepScheme(cfg.step_dt)
    half = StepScheme(0.5 * cfg.step_dt)  # midpoint state for the residual
    scheme.check_cfl(grid, params)
    potential = Potential(cfg.potential, cfg.omega)
    V = potential.on(grid, params)
    nonlinear = spec.dynamics == "nonlinear"
    coupling = NonlinearCoupling(cfg.alpha if nonlinear else 0.0)
    cg = dg.CoarseGraining(cfg.cg_cell_factor)
    dt = scheme.dt
    v_max = grid.dx / dt
    n_steps = cfg.n_steps
    records = _record_steps(cfg)

    psi0, rho0 = spec.initial_state(cfg, grid, params)
    dens = _Density(cfg, grid, params, psi0, rho0)
    psi = psi0

    out = None
    if write:
        out = cfg.out_dir
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.txt"), "w", newline="\n") as fh:
            fh.write(format_config(cfg))
        csv = open(os.path.join(out, CSV_NAME), "w", newline="\n")
        csv.write(",".join(dg.DiagnosticsRow.columns()) + "\n")

    rows: list[dg.DiagnosticsRow] = []
    snapshot_count = 0
    last_residual = 0.0
    rho = rho0
    f_q = np.ones(grid.shape)

    def emit(step: int, residual: float) -> None:
        nonlocal snapshot_count
        t = step * dt
        fine, coarse = dg.h_valentini(rho, psi, grid, cg)
        lo, hi = dg.fq_range(f_q, psi)
        dh = dg.dh_integrand(f_q, psi, coupling)
        row = dg.DiagnosticsRow(
            t=t,
            norm_psi=norm_squared(psi, grid),
            h_sym=dg.h_sym(rho, psi, grid),
            h_val=fine,
            h_val_coarse=coarse,
            l1_dist=dg.l1_distance(rho, psi, grid),
            fq_min=lo,
            fq_max=hi,
            cont_residual_sup=residual,
            dh_integrand_max=float(dh.max()),
            excluded_mass=dg.excluded_mass(rho, psi, grid),
        )
        rows.append(row)
        if out is not None:
            csv.write(row.as_csv() + "\n")
            if snapshot_count % cfg.snapshot_every == 0 or step == n_steps:
                _write_snapshots(out, step, t, psi, grid, dens.ens)
            snapshot_count += 1
        if observer is not None:
            observer(Record(step, t, psi, rho, f_q, dens.ens, row))

    try:
        for step in range(n_steps + 1):
            recording = step in records
            if nonlinear or recording:
                rho = dens.density(step * dt)
                f_q = f_q_field(rho, psi, grid)
            if step == n_steps:
                emit(step, last_residual)
                break
            if nonlinear:
                new = nonlinear_step(psi, f_q, grid, coupling, scheme, V, params)
            else:
                new = linear_step(psi, grid, scheme, V, params)
            if not np.all(np.isfinite(new)):
                raise NumericalAbort(step + 1)
            if recording or step + 1 == n_steps:
                if nonlinear:
                    mid = nonlinear_step(psi, f_q, grid, coupling, half, V, params)
                    res = continuity_residual(psi, new, grid, dt, params, f_q, coupling, psi_mid=mid)
                else:
                    mid = linear_step(psi, grid, half, V, params)
                    res = continuity_residual(psi, new, grid, dt, params, psi_mid=mid)
                last_residual = float(np.max(np.abs(res)))
            if recording:
                emit(step, last_residual)
            psi = new
            if dens.ens is not None:
                v = velocity_field(psi, grid, params, v_max=v_max)
                dens.ens = advect(dens.ens, v, grid, dt)
    finally:
        if out is not None:
            csv.close()

    summary = _summary(cfg, grid, params, rows, psi, rho, dens)
    if out is not None:
        with open(os.path.join(out, SUMMARY_NAME), "w", newline="\n") as fh:
            for key, val in summary.items():
                fh.write(f"{key} = {_fmt(val)}\n")
    return RunResult(cfg, grid, rows, psi, rho, dens.ens, summary, out)


def _fmt(val) -> str:
    return f"{val:.17g}" if isinstance(val, float) else str(val)


def _write_snapshots(out: str, step: int, t: float, psi, grid: Grid, ens) -> None:
    with open(os.path.join(out, f"field_{step:08d}.txt"), "w", newline="\n") as fh:
        write_field_snapshot(fh, psi, grid)
    if ens is not None:
        with open(os.path.join(out, f"ensemble_{step:08d}.txt"), "w", newline="\n") as fh:
            write_ensemble_snapshot(fh, ens, t)


def _summary(cfg, grid, params, rows, psi, rho, dens) -> dict[str, object]:
    first, last = rows[0], rows[-1]
    s: dict[str, object] = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "n_steps": cfg.n_steps,
        "step_dt": cfg.step_dt,
        "rows": len(rows),
        "norm_psi_final": last.norm_psi,
        "h_sym_initial": first.h_sym,
        "h_sym_final": last.h_sym,
        "h_val_initial": first.h_val,
        "h_val_final": last.h_val,
        "h_val_coarse_initial": first.h_val_coarse,
        "h_val_coarse_final": last.h_val_coarse,
        "l1_dist_final": last.l1_dist,
    }
    if dens.ens is not None:
        s["estimator"] = cfg.estimator
        if cfg.estimator == "gaussian_kde":
            s["bandwidth_final"] = float(dens.bandwidth)
        if grid.dim == 1:
            abs2 = np.abs(psi) ** 2
            s["ks_final"] = ks_distance(dens.ens.positions, abs2, grid)
    if cfg.scenario == "free-gaussian-oracle" and cfg.potential == "zero":
        exact = np.sqrt(cfg.norm0) * oracle_free_gaussian(grid, cfg.sigma0, params, cfg.t_end)
        s["oracle_max_error"] = float(np.max(np.abs(psi - exact)))
    return s
