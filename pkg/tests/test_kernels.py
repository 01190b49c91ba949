import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from pilotrelax import kernels
from pilotrelax.fields import Grid
from pilotrelax.transport import ModeExpansion

needs_numba = pytest.mark.skipif(not kernels.USE_NUMBA, reason="numba disabled")


def _smooth_velocity(grid, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(grid.dim):
        v = np.zeros(grid.shape)
        for m in range(1, 4):
            a, b = rng.normal(size=2)
            ph = sum(rng.integers(-2, 3) * x for x in grid.coords) + m * grid.coords[0]
            v += a * np.cos(2 * math.pi * ph / grid.length) + b * np.sin(2 * math.pi * ph / grid.length)
        out.append(v)
    return np.stack(out)


@needs_numba
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]))
def test_advect_numba_matches_numpy(seed, dim):
    g = Grid(dim, 32, 3.0)
    v = _smooth_velocity(g, seed)
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, g.length, (200,) if dim == 1 else (200, 2))
    pos[:3] = [0.0, g.length - 1e-15, 0.5 * g.dx] if dim == 1 else [[0.0, 0.0], [g.length - 1e-15, 0.0], [1.0, 2.9999]]
    a = kernels.advect_rk4(pos, v, g.dx, g.length, 0.05, use_numba=True)
    b = kernels.advect_rk4(pos, v, g.dx, g.length, 0.05, use_numba=False)
    d = np.abs(a - b)
    assert np.max(np.minimum(d, g.length - d)) < 1e-13
    assert np.all((a >= 0) & (a < g.length)) and np.all((b >= 0) & (b < g.length))


@needs_numba
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]))
def test_deposit_numba_matches_numpy(seed, dim):
    rng = np.random.default_rng(seed)
    n, length = 16, 2.0
    dx = length / n
    pos = rng.uniform(0, length, (500,) if dim == 1 else (500, 2))
    pos[:2] = 0.0
    pos[2] = length - 1e-15
    a = kernels.deposit_counts(pos, dx, n, use_numba=True)
    b = kernels.deposit_counts(pos, dx, n, use_numba=False)
    assert np.array_equal(a, b)
    assert a.sum() == 500


@needs_numba
@pytest.mark.parametrize("dim", [1, 2])
def test_trace_numba_matches_numpy(dim):
    g = Grid(dim, 32, 2 * math.pi)
    x, y = g.coords[0], g.coords[-1]
    psi = 1 + 0.5 * np.exp(1j * x) + 0.4 * np.exp(-2j * y) + 0.3 * np.exp(3j * (x + y))
    ex = ModeExpansion.from_grid(psi, g)
    pts = np.random.default_rng(dim).uniform(0, g.length, (100, dim))
    args = (pts, 0.7, 0.0, ex.kvec, ex.coef, ex.omega, 1.0, 1e-6, 1e-9)
    a = kernels.trace_modes(*args, use_numba=True)
    b = kernels.trace_modes(*args, use_numba=False)
    assert np.max(np.abs(a - b)) < 1e-9


def test_trace_round_trip():
    g = Grid(1, 32, 2 * math.pi)
    psi = 1 + 0.5 * np.exp(1j * g.x) + 0.2 * np.exp(-3j * g.x)
    ex = ModeExpansion.from_grid(psi, g)
    pts = np.linspace(0, 6, 25).reshape(-1, 1)
    fwd = kernels.trace_modes(pts, 0.0, 1.3, ex.kvec, ex.coef, ex.omega, 1.0, 1e-12, 1e-11)
    back = kernels.trace_modes(fwd, 1.3, 0.0, ex.kvec, ex.coef, ex.omega, 1.0, 1e-12, 1e-11)
    assert np.max(np.abs(back - pts)) < 1e-8


def test_trace_conserves_cdf_in_1d():
    # 1D guidance flow moves the CDF of |psi|^2 with the particle
    g = Grid(1, 512, 2 * math.pi)
    psi = 1 + 0.5 * np.exp(1j * g.x) + 0.2 * np.exp(-3j * g.x)
    ex = ModeExpansion.from_grid(psi, g)
    x0 = np.array([[1.0]])
    x1 = kernels.trace_modes(x0, 0.0, 0.8, ex.kvec, ex.coef, ex.omega, 1.0, 1e-12, 1e-11)[0, 0]

    def mass(t, a, b, m=20001):
        s = np.linspace(a, b, m)
        f = np.abs(ex.psi(s.reshape(-1, 1), t)) ** 2
        return trapezoid(f, s)

    # mass between the origin and the particle changes only by the flux through the origin
    ts = np.linspace(0, 0.8, 4001)
    j0 = []
    for t in ts:
        p = ex.psi(np.zeros((1, 1)), t)[0]
        dp = np.sum(1j * ex.kvec[:, 0] * ex.coef * np.exp(-1j * ex.omega * t))
        j0.append(np.imag(np.conj(p) * dp))
    flux = trapezoid(j0, ts)
    assert abs(mass(0.8, 0, x1) - (mass(0.0, 0, 1.0) + flux)) < 1e-6
