"""Fast in-package property checks behind ``pilotrelax selftest``.

Each check is randomized with a fixed seed and runs in well under a second;
the full suites live in the test tree.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .diagnostics import CoarseGraining, dh_integrand, h_sym, h_valentini
from .ensemble import DensityEstimator, ParticleEnsemble, estimate_density, f_q_field, sample
from .evolve import NonlinearCoupling, StepScheme, linear_step, nonlinear_step
from .fields import Grid, abs2, norm_squared, quantum_potential, spectral_gradient, spectral_laplacian, velocity_field
from .kernels import advect_rk4
from .scenarios import oracle_box_modes, oracle_free_gaussian

_CHECKS: list[tuple[str, Callable[[np.random.Generator], bool]]] = []


def _check(name: str):
    def register(fn):
        _CHECKS.append((name, fn))
        return fn

    return register


def _random_psi(rng, grid):
    z = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    zh = np.fft.fftn(z)
    zh[np.sqrt(grid.k2) > 0.25 * np.abs(grid.k).max()] = 0.0  # keep it band-limited
    psi = np.fft.ifftn(zh)
    return psi / math.sqrt(norm_squared(psi, grid))


@_check("spectral operators on Fourier modes")
def _spectral(rng):
    g = Grid(1, 128, 2 * math.pi)
    f = np.sin(5 * g.x)
    ok = np.allclose(spectral_gradient(f, g)[0], 5 * np.cos(5 * g.x), atol=1e-10)
    return ok and np.allclose(spectral_laplacian(np.exp(3j * g.x), g), -9 * np.exp(3j * g.x), atol=1e-10)


@_check("real psi has zero velocity")
def _real_velocity(rng):
    g = Grid(1, 256, 40.0)
    psi = np.abs(oracle_free_gaussian(g, 0.5))
    return bool(np.all(velocity_field(psi, g) == 0.0))


@_check("quantum potential ignores global phase")
def _qp_phase(rng):
    g = Grid(1, 128, 10.0)
    psi = _random_psi(rng, g)
    q = quantum_potential(psi, g)
    return all(
        np.allclose(quantum_potential(np.exp(1j * th) * psi, g), q, rtol=0, atol=1e-12 * max(1, np.abs(q).max()))
        for th in rng.uniform(0, 2 * np.pi, 10)
    )


@_check("linear step is unitary")
def _unitary(rng):
    g = Grid(1, 256, 20.0)
    psi = _random_psi(rng, g)
    out = linear_step(psi, g, StepScheme(1e-3))
    return abs(norm_squared(out, g) - 1.0) < 1e-12


@_check("zero coupling reduces to the linear step bitwise")
def _alpha_zero(rng):
    g = Grid(1, 256, 20.0)
    psi = _random_psi(rng, g)
    fq = rng.uniform(0, 3, g.shape)
    a = nonlinear_step(psi, fq, g, NonlinearCoupling(0.0), StepScheme(1e-3))
    return np.array_equal(a, linear_step(psi, g, StepScheme(1e-3)))


@_check("dH integrand is never positive")
def _dh_sign(rng):
    f = np.concatenate([[0.0, 1.0, 1e-300, 1e12], rng.exponential(2.0, 2000)])
    psi = np.sqrt(rng.uniform(0.01, 1.0, f.size))
    return all(float(dh_integrand(f, psi, NonlinearCoupling(a)).max()) <= 1e-12 for a in (0.0, 0.5, 3.0))


@_check("H functionals: positivity and coarse <= fine")
def _h_funcs(rng):
    g = Grid(1, 64, 1.0)
    for _ in range(50):
        rho = rng.exponential(1.0, g.shape)
        psi = np.sqrt(rng.exponential(1.0, g.shape))
        if h_sym(rho, psi, g) < 0:
            return False
        fine, coarse = h_valentini(rho, psi, g, CoarseGraining(8))
        if coarse > fine + 1e-12:
            return False
    return True


@_check("f_q of rho = |psi|^2 is one")
def _fq_one(rng):
    g = Grid(1, 128, 5.0)
    psi = _random_psi(rng, g)
    return bool(np.all(f_q_field(abs2(psi), psi, g) == 1.0))


@_check("deposited density integrates to one")
def _deposit(rng):
    g = Grid(1, 256, 10.0)
    ens = ParticleEnsemble(rng.uniform(0, 10.0, 1000))
    return all(
        abs(estimate_density(ens, g, DensityEstimator(k)).sum() * g.dx - 1.0) < 1e-9
        for k in ("histogram", "gaussian_kde")
    )


@_check("sampling is reproducible")
def _sampling(rng):
    g = Grid(1, 128, 2 * math.pi)
    psi = oracle_box_modes(g, rng.uniform(0, 2 * np.pi, 4))
    d = np.abs(psi) ** 2
    d /= d.sum() * g.dx
    return np.array_equal(sample(d, g, 500, 7).positions, sample(d, g, 500, 7).positions)


@_check("constant velocity advects exactly")
def _advect_const(rng):
    pos = rng.uniform(0, 10.0, 100)
    v = np.full((1, 64), 0.75)
    out = advect_rk4(pos, v, 10.0 / 64, 10.0, 1e-2)
    return np.allclose(out, np.mod(pos + 0.0075, 10.0), rtol=0, atol=1e-13)


def run_selftest(verbose: bool = True) -> bool:
    ok_all = True
    for i, (name, fn) in enumerate(_CHECKS):
        try:
            ok = bool(fn(np.random.default_rng(1000 + i)))
        except Exception as exc:  # report, keep going
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok_all &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return ok_all
