"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public wrappers at the bottom pick the compiled loop when
``pilotrelax._jit.USE_NUMBA`` is set. Both flavours perform the same
floating-point operations in the same order (no fastmath), and every
parallel loop writes only its own output slot, so results do not depend on
the thread count.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import USE_NUMBA, njit, prange

# --------------------------------------------------------------------------
# periodic 4-point Lagrange (cubic) interpolation


_SIXTH = 1.0 / 6.0


@njit(cache=True)
def _lagrange_weights(t):
    w0 = -t * (t - 1.0) * (t - 2.0) * _SIXTH
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) * _SIXTH
    return w0, w1, w2, w3


@njit(cache=True)
def _interp1(v, x, inv_dx, n):
    m = n - 1  # n is a power of two
    s = x * inv_dx
    fi = math.floor(s)
    t = s - fi
    i = int(fi)
    w0, w1, w2, w3 = _lagrange_weights(t)
    return (
        w0 * v[(i - 1) & m]
        + w1 * v[i & m]
        + w2 * v[(i + 1) & m]
        + w3 * v[(i + 2) & m]
    )


@njit(cache=True)
def _interp2(v, x, y, inv_dx, n):
    m = n - 1
    sx = x * inv_dx
    sy = y * inv_dx
    fx = math.floor(sx)
    fy = math.floor(sy)
    tx = sx - fx
    ty = sy - fy
    ix = int(fx)
    iy = int(fy)
    a0, a1, a2, a3 = _lagrange_weights(tx)
    b0, b1, b2, b3 = _lagrange_weights(ty)
    out = 0.0
    for a, ox in ((a0, -1), (a1, 0), (a2, 1), (a3, 2)):
        r = (ix + ox) & m
        row = (
            b0 * v[r, (iy - 1) & m]
            + b1 * v[r, iy & m]
            + b2 * v[r, (iy + 1) & m]
            + b3 * v[r, (iy + 2) & m]
        )
        out += a * row
    return out


@njit(cache=True)
def _wrap(x, length):
    y = x - length * math.floor(x / length)
    if y >= length or y < 0.0:  # rounding at the seam
        y = 0.0
    return y


@njit(cache=True, parallel=True)
def _advect1_nb(pos, v, dx, length, dt):
    inv = 1.0 / dx
    n = v.shape[0]
    out = np.empty_like(pos)
    for p in prange(pos.shape[0]):
        x = pos[p]
        k1 = _interp1(v, x, inv, n)
        k2 = _interp1(v, x + 0.5 * dt * k1, inv, n)
        k3 = _interp1(v, x + 0.5 * dt * k2, inv, n)
        k4 = _interp1(v, x + dt * k3, inv, n)
        out[p] = _wrap(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), length)
    return out


@njit(cache=True, parallel=True)
def _advect2_nb(pos, vx, vy, dx, length, dt):
    inv = 1.0 / dx
    n = vx.shape[0]
    out = np.empty_like(pos)
    h = 0.5 * dt
    for p in prange(pos.shape[0]):
        x = pos[p, 0]
        y = pos[p, 1]
        u1 = _interp2(vx, x, y, inv, n)
        w1 = _interp2(vy, x, y, inv, n)
        u2 = _interp2(vx, x + h * u1, y + h * w1, inv, n)
        w2 = _interp2(vy, x + h * u1, y + h * w1, inv, n)
        u3 = _interp2(vx, x + h * u2, y + h * w2, inv, n)
        w3 = _interp2(vy, x + h * u2, y + h * w2, inv, n)
        u4 = _interp2(vx, x + dt * u3, y + dt * w3, inv, n)
        w4 = _interp2(vy, x + dt * u3, y + dt * w3, inv, n)
        out[p, 0] = _wrap(x + dt / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4), length)
        out[p, 1] = _wrap(y + dt / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4), length)
    return out


def _weights_np(t):
    return (
        -t * (t - 1.0) * (t - 2.0) * _SIXTH,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) * _SIXTH,
    )


def _interp1_np(v, x, inv_dx):
    m = v.shape[0] - 1
    s = x * inv_dx
    fi = np.floor(s)
    t = s - fi
    i = fi.astype(np.int64)
    w = _weights_np(t)
    return w[0] * v[(i - 1) & m] + w[1] * v[i & m] + w[2] * v[(i + 1) & m] + w[3] * v[(i + 2) & m]


def _interp2_np(v, x, y, inv_dx):
    m = v.shape[0] - 1
    sx, sy = x * inv_dx, y * inv_dx
    fx, fy = np.floor(sx), np.floor(sy)
    a = _weights_np(sx - fx)
    b = _weights_np(sy - fy)
    ix, iy = fx.astype(np.int64), fy.astype(np.int64)
    out = 0.0
    for aw, ox in zip(a, (-1, 0, 1, 2)):
        r = (ix + ox) & m
        row = (
            b[0] * v[r, (iy - 1) & m]
            + b[1] * v[r, iy & m]
            + b[2] * v[r, (iy + 1) & m]
            + b[3] * v[r, (iy + 2) & m]
        )
        out = out + aw * row
    return out


def _wrap_np(x, length):
    y = x - length * np.floor(x / length)
    y[(y >= length) | (y < 0.0)] = 0.0
    return y


def _advect1_np(pos, v, dx, length, dt):
    inv = 1.0 / dx
    k1 = _interp1_np(v, pos, inv)
    k2 = _interp1_np(v, pos + 0.5 * dt * k1, inv)
    k3 = _interp1_np(v, pos + 0.5 * dt * k2, inv)
    k4 = _interp1_np(v, pos + dt * k3, inv)
    return _wrap_np(pos + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), length)


def _advect2_np(pos, vx, vy, dx, length, dt):
    inv = 1.0 / dx
    x, y = pos[:, 0], pos[:, 1]
    h = 0.5 * dt
    u1, w1 = _interp2_np(vx, x, y, inv), _interp2_np(vy, x, y, inv)
    u2, w2 = _interp2_np(vx, x + h * u1, y + h * w1, inv), _interp2_np(vy, x + h * u1, y + h * w1, inv)
    u3, w3 = _interp2_np(vx, x + h * u2, y + h * w2, inv), _interp2_np(vy, x + h * u2, y + h * w2, inv)
    u4, w4 = _interp2_np(vx, x + dt * u3, y + dt * w3, inv), _interp2_np(vy, x + dt * u3, y + dt * w3, inv)
    out = np.empty_like(pos)
    out[:, 0] = _wrap_np(x + dt / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4), length)
    out[:, 1] = _wrap_np(y + dt / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4), length)
    return out


# --------------------------------------------------------------------------
# histogram deposition (integer counts: order-independent by construction)


@njit(cache=True)
def _counts_nb(pos, dx, n):
    # pos is (N, dim); node cell of x is floor(x/dx + 1/2) mod n per axis
    dim = pos.shape[1]
    out = np.zeros(n**dim, dtype=np.int64)
    for p in range(pos.shape[0]):
        flat = 0
        for ax in range(dim):
            flat = flat * n + (int(math.floor(pos[p, ax] / dx + 0.5)) & (n - 1))
        out[flat] += 1
    return out


def _counts_np(pos, dx, n):
    ijk = np.floor(pos / dx + 0.5).astype(np.int64) & (n - 1)
    flat = ijk[:, 0]
    for ax in range(1, pos.shape[1]):
        flat = flat * n + ijk[:, ax]
    return np.bincount(flat, minlength=n ** pos.shape[1]).astype(np.int64)


# --------------------------------------------------------------------------
# guidance trajectories through a finite Fourier-mode expansion (V = 0):
# psi(x, t) = sum_m c_m exp(i (k_m . x - w_m t)); adaptive Dormand-Prince 5(4)

_DP_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th minus embedded 4th order weights; the 7th (FSAL) stage carries -1/40
_DP_E = _DP_B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100])
_DP_E7 = -1 / 40
_MAX_STEPS = 2_000_000


@njit(cache=True)
def _mode_velocity(x, t, kvec, coef, omega, scale, a2_floor, out):
    # dim is 1 or 2; the second axis is carried with zero wavenumbers in 1D
    dim = kvec.shape[1]
    x1 = x[1] if dim == 2 else 0.0
    pr = 0.0
    pi = 0.0
    gr0 = 0.0
    gi0 = 0.0
    gr1 = 0.0
    gi1 = 0.0
    for m in range(kvec.shape[0]):
        k0 = kvec[m, 0]
        k1 = kvec[m, 1] if dim == 2 else 0.0
        ph = -omega[m] * t + k0 * x[0] + k1 * x1
        c = math.cos(ph)
        s = math.sin(ph)
        er = coef[m].real * c - coef[m].imag * s
        ei = coef[m].real * s + coef[m].imag * c
        pr += er
        pi += ei
        gr0 -= k0 * ei
        gi0 += k0 * er
        gr1 -= k1 * ei
        gi1 += k1 * er
    a2 = pr * pr + pi * pi
    if a2 < a2_floor:
        a2 = a2_floor
    out[0] = scale * (pr * gi0 - pi * gr0) / a2
    if dim == 2:
        out[1] = scale * (pr * gi1 - pi * gr1) / a2


@njit(cache=True, parallel=True)
def _trace_nb(points, t0, t1, kvec, coef, omega, scale, a2_floor, tol, A, C, B, E, E7):
    npts, dim = points.shape
    out = np.empty_like(points)
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    for p in prange(npts):
        x = points[p].copy()
        K = np.zeros((7, dim))
        y = np.empty(dim)
        tmp = np.empty(dim)
        t = t0
        h = direction * min(1e-2, span) if span > 0 else 0.0
        _mode_velocity(x, t, kvec, coef, omega, scale, a2_floor, K[0])
        steps = 0
        while direction * (t1 - t) > 1e-13 * max(1.0, span) and steps < _MAX_STEPS:
            steps += 1
            if direction * (t + h - t1) > 0:
                h = t1 - t
            for s in range(1, 6):
                for d in range(dim):
                    acc = x[d]
                    for q in range(s):
                        acc += h * A[s, q] * K[q, d]
                    tmp[d] = acc
                _mode_velocity(tmp, t + C[s] * h, kvec, coef, omega, scale, a2_floor, K[s])
            for d in range(dim):
                acc = x[d]
                for q in range(6):
                    acc += h * B[q] * K[q, d]
                y[d] = acc
            _mode_velocity(y, t + h, kvec, coef, omega, scale, a2_floor, K[6])
            err = 0.0
            for d in range(dim):
                e = E7 * K[6, d]
                for q in range(6):
                    e += E[q] * K[q, d]
                e = abs(h * e) / tol
                if e > err:
                    err = e
            if err <= 1.0:
                t = t + h
                for d in range(dim):
                    x[d] = y[d]
                    K[0, d] = K[6, d]
            fac = 0.9 * err ** -0.2 if err > 0.0 else 5.0
            if fac > 5.0:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
            h = h * fac
        out[p] = x
    return out


def _mode_velocity_np(x, t, kvec, coef, omega, scale, a2_floor):
    ph = x @ kvec.T - omega[None, :] * t[:, None]
    c, s = np.cos(ph), np.sin(ph)
    er = coef.real * c - coef.imag * s
    ei = coef.real * s + coef.imag * c
    pr, pi = er.sum(axis=1), ei.sum(axis=1)
    gr = -(ei @ kvec)
    gi = er @ kvec
    a2 = np.maximum(pr * pr + pi * pi, a2_floor)
    return scale * (pr[:, None] * gi - pi[:, None] * gr) / a2[:, None]


def _trace_np(points, t0, t1, kvec, coef, omega, scale, a2_floor, tol, A, C, B, E, E7):
    # all trajectories advance together, each with its own step size
    x = points.copy()
    npts = x.shape[0]
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    t = np.full(npts, float(t0))
    h = np.full(npts, direction * min(1e-2, span) if span > 0 else 0.0)
    k0 = _mode_velocity_np(x, t, kvec, coef, omega, scale, a2_floor)
    active = np.full(npts, span > 0)
    for _ in range(_MAX_STEPS):
        active &= direction * (t1 - t) > 1e-13 * max(1.0, span)
        if not active.any():
            break
        ia = np.flatnonzero(active)
        xa, ta = x[ia], t[ia]
        ha = h[ia]
        over = direction * (ta + ha - t1) > 0
        ha = np.where(over, t1 - ta, ha)
        ks = [k0[ia]]
        for s in range(1, 6):
            tmp = xa + ha[:, None] * sum(A[s, q] * ks[q] for q in range(s))
            ks.append(_mode_velocity_np(tmp, ta + C[s] * ha, kvec, coef, omega, scale, a2_floor))
        y = xa + ha[:, None] * sum(B[q] * ks[q] for q in range(6))
        k7 = _mode_velocity_np(y, ta + ha, kvec, coef, omega, scale, a2_floor)
        e = E7 * k7 + sum(E[q] * ks[q] for q in range(6))
        err = np.max(np.abs(ha[:, None] * e), axis=1) / tol
        ok = err <= 1.0
        acc = ia[ok]
        x[acc] = y[ok]
        t[acc] = ta[ok] + ha[ok]
        k0[acc] = k7[ok]
        with np.errstate(divide="ignore"):
            fac = np.where(err > 0, 0.9 * err**-0.2, 5.0)
        h[ia] = ha * np.clip(fac, 0.2, 5.0)
    return x


# --------------------------------------------------------------------------
# dispatch


def advect_rk4(pos: np.ndarray, v: np.ndarray, dx: float, length: float, dt: float, use_numba: bool | None = None):
    """RK4 step of particles through a frozen gridded velocity field.

    ``pos`` is ``(N,)`` in 1D or ``(N, 2)`` in 2D; ``v`` is ``(dim, *shape)``.
    """
    jit = USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA)
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if v.shape[0] == 1:
        vv = np.ascontiguousarray(v[0])
        return (_advect1_nb if jit else _advect1_np)(pos, vv, dx, length, dt)
    vx, vy = np.ascontiguousarray(v[0]), np.ascontiguousarray(v[1])
    return (_advect2_nb if jit else _advect2_np)(pos, vx, vy, dx, length, dt)


def deposit_counts(pos: np.ndarray, dx: float, n: int, use_numba: bool | None = None) -> np.ndarray:
    """Particles per node cell, flattened row-major (integer, so order-free)."""
    jit = USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA)
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if pos.ndim == 1:
        pos = pos.reshape(-1, 1)
    return (_counts_nb if jit else _counts_np)(pos, float(dx), int(n))


def trace_modes(
    points: np.ndarray,
    t0: float,
    t1: float,
    kvec: np.ndarray,
    coef: np.ndarray,
    omega: np.ndarray,
    scale: float,
    a2_floor: float,
    tol: float,
    use_numba: bool | None = None,
) -> np.ndarray:
    """Carry ``points`` along guidance trajectories from ``t0`` to ``t1``.

    The wavefunction is the free mode sum ``sum c_m exp(i(k_m.x - omega_m t))``;
    ``scale`` is hbar/m and ``a2_floor`` bounds |psi|^2 from below in the
    velocity denominator. Positions are not wrapped.
    """
    jit = USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA)
    args = (
        np.ascontiguousarray(points, dtype=np.float64),
        float(t0),
        float(t1),
        np.ascontiguousarray(kvec, dtype=np.float64),
        np.ascontiguousarray(coef, dtype=np.complex128),
        np.ascontiguousarray(omega, dtype=np.float64),
        float(scale),
        float(a2_floor),
        float(tol),
        _DP_A,
        _DP_C,
        _DP_B,
        _DP_E,
        _DP_E7,
    )
    return (_trace_nb if jit else _trace_np)(*args)
