import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pkg", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pkg")

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def band_limited_psi(rng, grid, frac=0.25):
    """Random normalized field with no content above ``frac`` of the Nyquist wavenumber."""
    z = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    zh = np.fft.fftn(z)
    zh[np.sqrt(grid.k2) > frac * np.abs(grid.k).max()] = 0.0
    psi = np.fft.ifftn(zh)
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
