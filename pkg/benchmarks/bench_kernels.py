"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are importable in one process: every dispatcher takes
``use_numba``. Setting ``PILOTRELAX_PURE_NUMPY=1`` instead disables
compilation for the whole package.
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from pilotrelax import kernels
from pilotrelax.fields import Grid
from pilotrelax.scenarios import oracle_box_modes, random_phases
from pilotrelax.transport import ModeExpansion


def _cases():
    rng = np.random.default_rng(0)
    g1 = Grid(1, 2048, 160.0)
    v1 = np.sin(2 * math.pi * 3 * g1.x / g1.length)[None, :]
    p1 = rng.uniform(0, g1.length, 50_000)
    g2 = Grid(2, 128, 2 * math.pi)
    v2 = np.stack([np.sin(g2.coords[1]), np.cos(g2.coords[0])])
    p2 = rng.uniform(0, g2.length, (50_000, 2))
    ex = ModeExpansion.from_grid(oracle_box_modes(g2, random_phases(12345, 16)), g2)
    pts = rng.uniform(0, g2.length, (2_000, 2))

    yield "advect 1D, 5e4 particles", lambda nb: kernels.advect_rk4(p1, v1, g1.dx, g1.length, 1e-3, use_numba=nb)
    yield "advect 2D, 5e4 particles", lambda nb: kernels.advect_rk4(p2, v2, g2.dx, g2.length, 1e-2, use_numba=nb)
    yield "deposit 1D, 5e4 particles", lambda nb: kernels.deposit_counts(p1, g1.dx, g1.n, use_numba=nb)
    yield "deposit 2D, 5e4 particles", lambda nb: kernels.deposit_counts(p2, g2.dx, g2.n, use_numba=nb)
    yield "trace 2D, 2e3 points to t=1", lambda nb: kernels.trace_modes(
        pts, 1.0, 0.0, ex.kvec, ex.coef, ex.omega, 1.0, 1e-4 * float(np.sum(np.abs(ex.coef) ** 2)), 1e-8, use_numba=nb
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.USE_NUMBA:
        print("numba is disabled; only the numpy column is meaningful")
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in _cases():
        fn(True)  # compile outside the timing
        t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_nb:10.2f} {t_np:10.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
