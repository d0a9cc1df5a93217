"""Hot numerical kernels.

Two loops dominate the runtime of the library: the adaptive integration of the
stationary Schrödinger equation behind every Jost solution, and the evaluation
of the Fourier transform of a grid function at momenta that are not on the FFT
grid (energy representations).  Both live here, compiled by numba when it is
enabled; ``STEPDELAY_NO_JIT=1`` runs the identical code uncompiled, and
:func:`dtft` switches to a vectorised numpy formulation.
"""
import math

import numpy as np

from ._jit import USING_JIT, njit

PURE_STEP = 0
SMOOTH_STEP = 1
STEP_BUMP = 2
CUSTOM = 3

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True)
def potential_value(x, kind, params, breaks, coefs):
    """Evaluate an encoded potential at a single point."""
    vl = params[0]
    vr = params[1]
    if kind == PURE_STEP:
        return vl if x < 0.0 else vr
    if kind == SMOOTH_STEP or kind == STEP_BUMP:
        v = vl + (vr - vl) * 0.5 * (1.0 + math.tanh(x / params[2]))
        if kind == STEP_BUMP:
            u = (x - params[4]) / params[5]
            v += params[3] * math.exp(-u * u)
        return v
    # piecewise polynomial on [breaks[0], breaks[-1]), constants outside
    m = breaks.shape[0] - 1
    if x < breaks[0]:
        return vl
    if x >= breaks[m]:
        return vr
    lo = 0
    hi = m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x < breaks[mid]:
            hi = mid
        else:
            lo = mid
    s = x - breaks[lo]
    deg = coefs.shape[1] - 1
    acc = coefs[lo, deg]
    for j in range(deg - 1, -1, -1):
        acc = acc * s + coefs[lo, j]
    return acc


@njit(cache=True)
def _vclamped(x, lo, hi, kind, params, breaks, coefs):
    # stay strictly inside the current grid interval so one-sided limits are
    # used at discontinuities sitting on grid nodes
    eps = 1e-12 * (hi - lo)
    if x < lo + eps:
        x = lo + eps
    elif x > hi - eps:
        x = hi - eps
    return potential_value(x, kind, params, breaks, coefs)


@njit(cache=True, nogil=True)
def integrate_jost(xs, start, y0, z0, energy, kind, params, breaks, coefs, rtol, atol):
    """Integrate ``y'' = (V - E) y`` across the nodes ``xs``.

    ``start`` is 0 (march right) or ``len(xs) - 1`` (march left).  Inside every
    grid interval an adaptive Dormand-Prince 5(4) step controller is used, so
    the nodes double as mandatory step endpoints.  Returns node values of y and
    y' and the number of accepted steps.
    """
    n = xs.shape[0]
    ys = np.empty(n, dtype=np.complex128)
    zs = np.empty(n, dtype=np.complex128)
    ys[start] = y0
    zs[start] = z0
    step = 1 if start == 0 else -1
    y = y0
    z = z0
    h_abs = 0.0
    nsteps = 0
    i = start
    for _ in range(n - 1):
        j = i + step
        a = xs[i]
        b = xs[j]
        lo = min(a, b)
        hi = max(a, b)
        span = hi - lo
        if h_abs == 0.0:
            h_abs = span
        x = a
        remaining = span
        while remaining > 1e-14 * span:
            h = min(h_abs, remaining)
            last = h >= remaining
            hs = h * step
            w1 = _vclamped(x, lo, hi, kind, params, breaks, coefs) - energy
            k1y = z
            k1z = w1 * y
            w2 = _vclamped(x + _C2 * hs, lo, hi, kind, params, breaks, coefs) - energy
            yy = y + hs * _A21 * k1y
            zz = z + hs * _A21 * k1z
            k2y = zz
            k2z = w2 * yy
            w3 = _vclamped(x + _C3 * hs, lo, hi, kind, params, breaks, coefs) - energy
            yy = y + hs * (_A31 * k1y + _A32 * k2y)
            zz = z + hs * (_A31 * k1z + _A32 * k2z)
            k3y = zz
            k3z = w3 * yy
            w4 = _vclamped(x + _C4 * hs, lo, hi, kind, params, breaks, coefs) - energy
            yy = y + hs * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
            zz = z + hs * (_A41 * k1z + _A42 * k2z + _A43 * k3z)
            k4y = zz
            k4z = w4 * yy
            w5 = _vclamped(x + _C5 * hs, lo, hi, kind, params, breaks, coefs) - energy
            yy = y + hs * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
            zz = z + hs * (_A51 * k1z + _A52 * k2z + _A53 * k3z + _A54 * k4z)
            k5y = zz
            k5z = w5 * yy
            w6 = _vclamped(x + hs, lo, hi, kind, params, breaks, coefs) - energy
            yy = y + hs * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
            zz = z + hs * (_A61 * k1z + _A62 * k2z + _A63 * k3z + _A64 * k4z + _A65 * k5z)
            k6y = zz
            k6z = w6 * yy
            yn = y + hs * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
            zn = z + hs * (_B1 * k1z + _B3 * k3z + _B4 * k4z + _B5 * k5z + _B6 * k6z)
            k7y = zn
            k7z = w6 * yn
            ey = hs * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
            ez = hs * (_E1 * k1z + _E3 * k3z + _E4 * k4z + _E5 * k5z + _E6 * k6z + _E7 * k7z)
            sy = atol + rtol * max(abs(y), abs(yn))
            sz = atol + rtol * max(abs(z), abs(zn))
            err = math.sqrt(0.5 * ((abs(ey) / sy) ** 2 + (abs(ez) / sz) ** 2))
            if err <= 1.0:
                y = yn
                z = zn
                x = b if last else x + hs
                remaining = 0.0 if last else remaining - h
                nsteps += 1
                fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                h_abs = h * fac
            else:
                h_abs = h * max(0.2, 0.9 * err ** -0.2)
        ys[j] = y
        zs[j] = z
        i = j
    return ys, zs, nsteps


@njit(cache=True, nogil=True)
def _dtft_loop(values, x0, dx, momenta, lo, hi):
    out = np.empty(momenta.shape[0], dtype=np.complex128)
    for k in range(momenta.shape[0]):
        p = momenta[k]
        acc = 0.0 + 0.0j
        rot = math.cos(p * dx) - 1j * math.sin(p * dx)
        j = lo
        while j < hi:
            # reseed the phase every block to bound recurrence drift
            ph = p * (x0 + j * dx)
            w = math.cos(ph) - 1j * math.sin(ph)
            stop = min(j + 64, hi)
            while j < stop:
                acc += w * values[j]
                w *= rot
                j += 1
        out[k] = acc
    return out


def _dtft_numpy(values, x0, dx, momenta, lo, hi, chunk=256):
    xs = x0 + dx * np.arange(lo, hi)
    vals = values[lo:hi]
    out = np.empty(momenta.shape[0], dtype=np.complex128)
    for s in range(0, momenta.shape[0], chunk):
        ps = momenta[s:s + chunk]
        out[s:s + chunk] = np.exp(-1j * np.outer(ps, xs)) @ vals
    return out


def dtft(values, x0, dx, momenta, floor=0.0):
    """Fourier transform ``(2 pi)^(-1/2) sum_j dx exp(-i p x_j) f_j`` at arbitrary ``p``.

    Grid points whose magnitude is below ``floor`` times the peak at both ends of
    the array are skipped.
    """
    values = np.ascontiguousarray(values, dtype=np.complex128)
    momenta = np.ascontiguousarray(np.atleast_1d(momenta), dtype=np.float64)
    lo, hi = 0, values.shape[0]
    if floor > 0.0:
        mag = np.abs(values)
        idx = np.nonzero(mag > floor * mag.max())[0]
        if idx.size == 0:
            return np.zeros(momenta.shape[0], dtype=np.complex128)
        lo, hi = int(idx[0]), int(idx[-1]) + 1
    if USING_JIT:
        raw = _dtft_loop(values, float(x0), float(dx), momenta, lo, hi)
    else:
        raw = _dtft_numpy(values, float(x0), float(dx), momenta, lo, hi)
    return raw * (dx / math.sqrt(2.0 * math.pi))
