import io
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from pilotrelax.fields import (
    Grid,
    GridMismatchError,
    PhysicalParams,
    abs2,
    norm_squared,
    passing_mask,
    probability_current,
    quantum_potential,
    read_field_snapshot,
    spectral_gradient,
    spectral_laplacian,
    velocity_field,
    write_field_snapshot,
)

from conftest import band_limited_psi


# --- Grid -------------------------------------------------------------------


@pytest.mark.parametrize("dim,n,length", [(1, 8, 1.0), (1, 1024, 40.0), (2, 64, 2 * math.pi), (2, 16, 0.3)])
def test_cell_volume_tiles_domain_exactly(dim, n, length):
    g = Grid(dim, n, length)
    assert g.cell_volume * g.size == g.volume


@pytest.mark.parametrize("n", [2, 8, 64, 1024])
def test_wavenumber_ladder_is_symmetric(n):
    g = Grid(1, n, 3.0)
    k = g.k
    inner = k[np.abs(k) < np.abs(k).max() - 1e-9]
    assert sorted(np.round(inner, 9)) == sorted(np.round(-inner, 9))
    # the Nyquist mode appears once
    assert np.sum(np.isclose(np.abs(k), np.abs(k).max())) == 1


@pytest.mark.parametrize("kw", [dict(dim=3, n=8, length=1.0), dict(dim=1, n=1000, length=1.0),
                                dict(dim=1, n=8, length=0.0), dict(dim=1, n=1, length=1.0)])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        Grid(**kw)


def test_physical_params_positive():
    with pytest.raises(ValueError):
        PhysicalParams(hbar=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(mass=-1.0)


def test_grid_mismatch_is_reported():
    g = Grid(1, 64, 1.0)
    with pytest.raises(GridMismatchError):
        norm_squared(np.ones(32, dtype=complex), g)


def test_wrap_maps_into_half_open_domain():
    g = Grid(1, 16, 2.0)
    out = g.wrap(np.array([-1e-300, -0.5, 2.0, 4.5, 1.999]))
    assert np.all((out >= 0) & (out < 2.0))
    assert out[1] == 1.5 and out[2] == 0.0 and out[3] == 0.5


# --- norm -------------------------------------------------------------------


def test_norm_of_zero_field():
    g = Grid(1, 128, 5.0)
    assert norm_squared(np.zeros(g.shape, dtype=complex), g) == 0.0


def test_norm_of_normalized_constant():
    g = Grid(1, 256, 7.3)
    psi = np.full(g.shape, 1 / math.sqrt(g.length), dtype=complex)
    assert abs(norm_squared(psi, g) - 1.0) < 1e-12


def test_norm_of_gaussian_against_quadrature():
    g = Grid(1, 1024, 40.0)
    sigma = 0.5
    dens = lambda x: np.exp(-((x - 20.0) ** 2) / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)
    exact, _ = integrate.quad(dens, 0.0, 40.0, points=[20.0], epsabs=1e-14)
    psi = np.sqrt(dens(g.x)).astype(complex)
    assert abs(exact - 1.0) < 1e-12
    assert abs(norm_squared(psi, g) - exact) < 1e-9


# --- spectral operators ------------------------------------------------------


def test_gradient_of_sine():
    g = Grid(1, 128, 10.0)
    k = 2 * math.pi * 7 / g.length
    grad = spectral_gradient(np.sin(k * g.x), g)
    assert grad.shape == (1, 128)
    assert np.max(np.abs(grad[0] - k * np.cos(k * g.x))) < 1e-10


def test_constant_has_no_derivatives():
    g = Grid(2, 32, 3.0)
    f = np.full(g.shape, 2.5)
    assert np.max(np.abs(spectral_gradient(f, g))) < 1e-14
    assert np.max(np.abs(spectral_laplacian(f, g))) < 1e-14


def test_laplacian_of_plane_wave():
    g = Grid(1, 256, 40.0)
    k = 2 * math.pi * 11 / g.length
    f = np.exp(1j * k * g.x)
    assert np.max(np.abs(spectral_laplacian(f, g) + k * k * f)) < 1e-10


def test_laplacian_2d_plane_wave():
    g = Grid(2, 64, 2 * math.pi)
    x, y = g.coords
    f = np.exp(1j * (3 * x - 2 * y))
    assert np.max(np.abs(spectral_laplacian(f, g) + 13 * f)) < 1e-10
    grad = spectral_gradient(f, g)
    assert np.max(np.abs(grad[0] - 3j * f)) < 1e-10
    assert np.max(np.abs(grad[1] + 2j * f)) < 1e-10


@given(shift=st.integers(-63, 63), seed=st.integers(0, 2**32 - 1))
def test_spectral_operators_commute_with_circular_shift(shift, seed):
    g = Grid(1, 64, 5.0)
    psi = band_limited_psi(np.random.default_rng(seed), g, frac=0.9)
    a = np.roll(spectral_laplacian(psi, g), shift)
    b = spectral_laplacian(np.roll(psi, shift), g)
    scale = max(1.0, np.abs(a).max())
    assert np.max(np.abs(a - b)) <= 1e-12 * scale
    ga = np.roll(spectral_gradient(psi, g), shift, axis=-1)
    gb = spectral_gradient(np.roll(psi, shift), g)
    assert np.max(np.abs(ga - gb)) <= 1e-12 * max(1.0, np.abs(ga).max())


# --- velocity ---------------------------------------------------------------


def test_plane_wave_velocity():
    g = Grid(1, 256, 40.0)
    k = 2 * math.pi * 5 / g.length
    v = velocity_field(np.exp(1j * k * g.x), g)
    assert np.max(np.abs(v[0] - k)) < 1e-10


def test_velocity_scales_with_hbar_over_m():
    g = Grid(1, 64, 2 * math.pi)
    v = velocity_field(np.exp(3j * g.x), g, PhysicalParams(hbar=2.0, mass=4.0))
    assert np.max(np.abs(v[0] - 1.5)) < 1e-12


def test_real_gaussian_has_zero_velocity():
    g = Grid(1, 1024, 40.0)
    psi = np.exp(-((g.x - 20) ** 2) / 1.0)
    assert np.max(np.abs(velocity_field(psi, g))) < 1e-10


def test_real_superposition_has_zero_velocity():
    g = Grid(1, 512, 10.0)
    k = 2 * math.pi * 3 / g.length
    psi = (2 * np.cos(k * g.x)).astype(complex)
    v = velocity_field(psi, g)
    away = np.abs(np.cos(k * g.x)) > 1e-3
    assert np.all(v[0][away] == 0.0)


@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]))
def test_real_field_velocity_is_exactly_zero(seed, dim):
    g = Grid(dim, 32, 4.0)
    rng = np.random.default_rng(seed)
    psi = band_limited_psi(rng, g).real
    v = velocity_field(psi.astype(complex), g)
    mask = passing_mask(abs2(psi.astype(complex)))
    assert np.all(v[:, mask] == 0.0)


def test_velocity_clamped_below_floor():
    g = Grid(1, 128, 2 * math.pi)
    psi = np.exp(1j * 40 * g.x) * np.where(np.arange(128) < 64, 1.0, 1e-9)
    v = velocity_field(psi, g, v_max=5.0)
    below = ~passing_mask(abs2(psi))
    assert below.any()
    assert np.all(np.abs(v[0][below]) <= 5.0)
    assert np.all(np.isfinite(v))


def test_velocity_equals_current_over_density():
    g = Grid(2, 32, 3.0)
    psi = band_limited_psi(np.random.default_rng(5), g) + 0.5
    v = velocity_field(psi, g)
    j = probability_current(psi, g)
    assert np.allclose(v * abs2(psi), j, atol=1e-12)
    # Im(grad psi / psi) computed the textbook way
    ref = np.imag(spectral_gradient(psi, g) / psi)
    assert np.allclose(v, ref, atol=1e-9)


# --- quantum potential ---------------------------------------------------------


def test_plane_wave_quantum_potential_vanishes():
    g = Grid(1, 256, 40.0)
    q = quantum_potential(np.exp(1j * 2 * math.pi * 4 / 40.0 * g.x), g)
    assert np.max(np.abs(q)) < 1e-10


def test_gaussian_amplitude_quantum_potential_symbolic():
    sigma = 0.7
    xs = sp.symbols("x", real=True)
    R = sp.exp(-(xs**2) / (4 * sp.Rational(7, 10) ** 2))
    Q = sp.lambdify(xs, sp.simplify(-sp.diff(R, xs, 2) / (2 * R)), "numpy")
    g = Grid(1, 1024, 40.0)
    x = g.x - 20.0
    psi = np.exp(-(x**2) / (4 * sigma**2)).astype(complex)
    q = quantum_potential(psi, g)
    interior = np.abs(x) < 5.0
    expected = 1 / (4 * sigma**2) - x**2 / (8 * sigma**4)
    assert np.max(np.abs(Q(x[interior]) - expected[interior])) < 1e-12  # oracle self-check
    assert np.max(np.abs(q[interior] - Q(x[interior]))) < 1e-6


def test_sine_box_mode_quantum_potential():
    g = Grid(1, 512, 10.0)
    k = math.pi / 5.0  # sin(pi x / L') with L' = L/2 is periodic on the grid
    psi = np.sin(k * g.x).astype(complex)
    q = quantum_potential(psi, g)
    support = np.abs(psi) ** 2 > 1e-8
    assert np.max(np.abs(q[support] - k * k / 2)) < 1e-6


def test_quantum_potential_global_phase_invariance(rng):
    # nowhere-small amplitude; a coarse grid keeps the k^2 roundoff gain small.
    # The field's spectrum is below 1e-16 well inside the 64-point band.
    g = Grid(1, 64, 2 * math.pi)
    psi = (1.5 + 0.5 * np.cos(g.x) + 0.2 * np.sin(3 * g.x)) * np.exp(1j * (np.sin(g.x) + 2 * g.x))
    q = quantum_potential(psi, g)
    for theta in rng.uniform(0, 2 * math.pi, 100):
        q2 = quantum_potential(np.exp(1j * theta) * psi, g)
        assert np.max(np.abs(q2 - q)) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), theta=st.floats(0, 2 * math.pi))
def test_quantum_potential_phase_invariance_random_fields(seed, theta):
    g = Grid(1, 64, 6.0)
    psi = band_limited_psi(np.random.default_rng(seed), g) + 0.3
    q = quantum_potential(psi, g)
    q2 = quantum_potential(np.exp(1j * theta) * psi, g)
    assert np.max(np.abs(q2 - q)) <= 1e-12 * max(1.0, np.abs(q).max())


def test_quantum_potential_zero_on_subfloor_nodes():
    g = Grid(1, 64, 1.0)
    psi = np.where(np.arange(64) < 32, 1.0, 0.0).astype(complex)
    q = quantum_potential(psi, g)
    assert np.all(q[32:] == 0.0)


# --- snapshots --------------------------------------------------------------------


def test_field_snapshot_format_and_round_trip():
    g = Grid(2, 4, 1.0)
    psi = band_limited_psi(np.random.default_rng(1), g, frac=1.0)
    buf = io.StringIO()
    write_field_snapshot(buf, psi, g)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 16
    first = lines[1].split()
    assert len(first) == 5
    # row-major: second line is x=0, y=dx
    assert float(first[0]) == 0.0 and float(first[1]) == 0.25
    buf.seek(0)
    back = read_field_snapshot(buf, g)
    assert np.array_equal(back, psi)
