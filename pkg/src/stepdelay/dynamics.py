"""Time evolution and sojourn-time quadratures.

Channel, in-free and out-free evolutions are exact Fourier multipliers.  The
full Hamiltonian is propagated with Strang splitting
``exp(-i V dt/2) exp(-i p^2 dt) exp(-i V dt/2)`` on a periodic grid that is
sized so the packet never reaches the boundary (no absorbing layers, which
would bias the sojourn integrals).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .potential import Potential
from .spectral import (AdmissiblePacket, SpatialState, inverse_transform, momenta,
                       scatter_state)
from .stationary import CertificateError, GridError, ScatteringData

LEAKAGE_TOL = 1e-6
EDGE_FRACTION = 0.02


# -- exact multipliers ------------------------------------------------------

def evolve_channel(phi: SpatialState, kappa: float, t: float) -> SpatialState:
    """``exp(-i (P^2 + kappa) t) phi``."""
    if t == 0.0:
        return phi
    p = phi.p
    return phi.with_momentum(phi.momentum_values * np.exp(-1j * (p * p + kappa) * t))


def _two_channel(phi, kappa_pos, kappa_neg, t):
    if t == 0.0:
        return phi
    p = phi.p
    kappa = np.where(p > 0, kappa_pos, kappa_neg)
    return phi.with_momentum(phi.momentum_values * np.exp(-1j * (p * p + kappa) * t))


def evolve_in_free(phi: SpatialState, v_left: float, v_right: float, t: float) -> SpatialState:
    """``H_in = H_l`` on positive momenta, ``H_r`` on negative momenta."""
    return _two_channel(phi, v_left, v_right, t)


def evolve_out_free(phi: SpatialState, v_left: float, v_right: float, t: float) -> SpatialState:
    """``H_out = H_r`` on positive momenta, ``H_l`` on negative momenta."""
    return _two_channel(phi, v_right, v_left, t)


# -- split-step propagation -------------------------------------------------

@dataclass(frozen=True)
class EvolutionSpec:
    hamiltonian: str
    dt: float
    t_max: float
    method: str

    def __post_init__(self):
        if self.hamiltonian not in ("full", "channel", "in-free", "out-free"):
            raise ValueError(f"unknown hamiltonian {self.hamiltonian!r}")
        if self.method not in ("fourier-multiplier", "split-step"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.hamiltonian != "full" and self.method != "fourier-multiplier":
            raise ValueError("constant-potential evolutions are exact multipliers")


def default_dt(dx: float) -> float:
    return 0.4 * dx * dx


class SplitStep:
    """Strang splitting for ``-d^2/dx^2 + V`` on a fixed grid and step."""

    def __init__(self, potential: Potential, x_min: float, dx: float, n: int, dt: float):
        self.x_min, self.dx, self.n, self.dt = x_min, dx, n, dt
        x = x_min + dx * np.arange(n)
        p = momenta(n, dx)
        self.half_v = np.exp(-0.5j * dt * potential.profile(x))
        self.kinetic = np.exp(-1j * dt * p * p)

    def advance(self, values: np.ndarray, steps: int) -> np.ndarray:
        """Apply ``steps`` Strang steps to grid values (merging adjacent half steps)."""
        if steps <= 0:
            return values
        hv, kin = self.half_v, self.kinetic
        full_v = hv * hv
        u = values * hv
        for i in range(steps):
            u = np.fft.ifft(np.fft.fft(u) * kin)
            u *= full_v if i < steps - 1 else hv
        return u


def edge_mass(values: np.ndarray, dx: float, fraction: float = EDGE_FRACTION) -> float:
    m = max(1, int(fraction * values.shape[0]))
    a = np.abs(values)
    return float((np.sum(a[:m] ** 2) + np.sum(a[-m:] ** 2)) * dx)


def _check_leakage(values, dx, tol, where):
    leak = edge_mass(values, dx)
    if leak > tol:
        raise GridError(f"boundary mass {leak:.3g} exceeds {tol:g} ({where}); enlarge the grid")


def evolve_full(phi: SpatialState, potential: Potential, t: float, dt: Optional[float] = None,
                leakage_tol: float = LEAKAGE_TOL) -> SpatialState:
    """``exp(-i H t) phi`` by Strang splitting; ``t`` may be negative."""
    if t == 0.0:
        return phi
    dt = dt or default_dt(phi.dx)
    steps = max(1, int(math.ceil(abs(t) / dt)))
    h = t / steps
    prop = SplitStep(potential, phi.x_min, phi.dx, phi.n, h)
    out = phi.with_values(prop.advance(phi.values, steps))
    drift = abs(out.norm2 - phi.norm2)
    if drift > 1e-6 * max(phi.norm2, 1e-300):
        raise CertificateError("norm-drift", f"split-step norm changed by {drift:.3g}")
    _check_leakage(out.values, out.dx, leakage_tol, f"t={t}")
    return out


def splitting_order(phi: SpatialState, potential: Potential, t: float, dt: float) -> float:
    """Observed convergence order from runs with ``dt``, ``dt/2`` and ``dt/4``."""
    a = evolve_full(phi, potential, t, dt).values
    b = evolve_full(phi, potential, t, dt / 2).values
    c = evolve_full(phi, potential, t, dt / 4).values
    e1 = np.linalg.norm(a - b)
    e2 = np.linalg.norm(b - c)
    return float(math.log2(e1 / e2))


# -- Moller approximant -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class MollerResult:
    state: SpatialState
    t_asym: float
    defect: float
    norm_error: float


def _moller(phi: SpatialState, potential: Potential, v_left, v_right, t_asym, dt, leakage_tol):
    past = evolve_in_free(phi, v_left, v_right, -t_asym)
    _check_leakage(past.values, past.dx, leakage_tol, f"free state at t=-{t_asym}")
    return evolve_full(past, potential, t_asym, dt, leakage_tol)


def moller_minus(packet, potential: Potential, t_asym: float, dt: Optional[float] = None,
                 tol: Optional[float] = None, leakage_tol: float = LEAKAGE_TOL) -> MollerResult:
    """``exp(-i H T) exp(i H_in T) phi`` at ``T = t_asym`` and ``2 T``.

    The returned state is the ``2 T`` approximant; ``defect`` is the norm of
    its difference from the ``T`` approximant.
    """
    phi = packet.state if isinstance(packet, AdmissiblePacket) else packet
    vl, vr = potential.v_left, potential.v_right
    psi1 = _moller(phi, potential, vl, vr, t_asym, dt, leakage_tol)
    psi2 = _moller(phi, potential, vl, vr, 2.0 * t_asym, dt, leakage_tol)
    defect = math.sqrt(np.sum(np.abs(psi1.values - psi2.values) ** 2) * phi.dx)
    if tol is not None and defect > tol:
        raise CertificateError("moller-defect", f"defect {defect:.3g} exceeds {tol:g}")
    return MollerResult(psi2, 2.0 * t_asym, defect, abs(math.sqrt(psi2.norm2) - math.sqrt(phi.norm2)))


# -- sojourn times ----------------------------------------------------------

@dataclass(frozen=True)
class Quadrature:
    """Time quadrature: trapezoid on ``[-t_max, t_max]`` plus power-law tails."""

    t_max: float
    dt: Optional[float] = None
    sample_dt: float = 0.1
    tail_fraction: float = 0.2
    tail_tol: float = 1e-3
    moller_tol: float = 1e-2
    leakage_tol: float = LEAKAGE_TOL


def tail_extrapolation(t: np.ndarray, f: np.ndarray, fraction: float = 0.2, noise: float = 1e-9,
                       floor: float = 0.0):
    """``int_{t_end}^inf`` of a fitted ``C t^-alpha`` continuation of ``f``.

    ``t`` is positive and increasing.  Returns ``(tail, alpha)``; the tail is
    ``inf`` when the measured decay is not integrable.  An end value below
    ``noise`` times the peak, or below the absolute ``floor``, is treated as
    already converged.
    """
    t = np.asarray(t, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if t.size < 4:
        return 0.0, float("nan")
    scale = np.max(np.abs(f))
    end = abs(f[-1])
    if scale == 0.0 or end <= max(noise * scale, floor):
        return 0.0, float("inf")
    sel = t >= t[-1] * (1.0 - fraction)
    ts, fs = t[sel], np.abs(f[sel])
    good = fs > 0
    if good.sum() < 3:
        return 0.0, float("inf")
    slope = np.polyfit(np.log(ts[good]), np.log(fs[good]), 1)[0]
    alpha = -slope
    if alpha <= 1.0:
        return float("inf") * np.sign(f[-1]), alpha
    return float(np.sign(f[-1]) * end * t[-1] / (alpha - 1.0)), float(alpha)


@dataclass(eq=False)
class SojournRecord:
    """Cumulative spatial masses of several densities at probe points over time.

    ``cum[key][i, j]`` is ``int_{x_min}^{points[j]} rho_key(t_i, x) dx``.  Keys:
    ``full`` (interacting state), ``in`` (free incoming), ``out`` (free
    outgoing), ``refl`` and ``trans`` (its reflected and transmitted parts).
    """

    times: np.ndarray
    points: np.ndarray
    cum: Dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def _col(self, x):
        j = np.nonzero(np.isclose(self.points, x, rtol=0, atol=1e-9))[0]
        if j.size == 0:
            raise KeyError(f"position {x} was not recorded")
        return int(j[0])

    def window(self, key: str, a: float, b: float) -> np.ndarray:
        """``int_a^b rho_key dx`` at every recorded time."""
        c = self.cum[key]
        return c[:, self._col(b)] - c[:, self._col(a)]

    def integrate(self, values: np.ndarray, part: str = "all"):
        """Time integral of a sampled integrand with tail corrections.

        Returns ``(value, tail_magnitude)``; ``part`` selects ``all``, ``pos``
        (t >= 0) or ``neg`` (t <= 0).
        """
        t = self.times
        frac = self.meta.get("tail_fraction", 0.2)
        # masses of unit-norm states: differences below this are roundoff
        floor = self.meta.get("mass_floor", 1e-9)
        total, tails = 0.0, 0.0
        if part in ("all", "pos"):
            m = t >= 0
            total += float(np.trapezoid(values[m], t[m]))
            tail, _ = tail_extrapolation(t[m], values[m], frac, floor=floor)
            total += tail
            tails += abs(tail)
        if part in ("all", "neg"):
            m = t <= 0
            total += float(np.trapezoid(values[m], t[m]))
            tail, _ = tail_extrapolation(-t[m][::-1], values[m][::-1], frac, floor=floor)
            total += tail
            tails += abs(tail)
        return total, tails

    def sojourn(self, key: str, a: float, b: float, part: str = "all"):
        return self.integrate(self.window(key, a, b), part)


@dataclass(eq=False)
class SojournCurve:
    r_values: np.ndarray
    t_full: np.ndarray
    t_in: np.ndarray
    t_out: np.ndarray
    meta: dict = field(default_factory=dict)
    record: Optional[SojournRecord] = field(default=None, repr=False)

    def as_rows(self):
        return np.column_stack([self.r_values, self.t_full, self.t_in, self.t_out])


def _cumulative(values: np.ndarray, dx: float, x: np.ndarray, points: np.ndarray) -> np.ndarray:
    rho = np.abs(values) ** 2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * dx)])
    return np.interp(points, x, cum)


def probe_points(r_values: Sequence[float], shifts: Sequence[float] = ()) -> np.ndarray:
    pts = {0.0}
    for r in r_values:
        for s in (0.0,) + tuple(shifts):
            pts.add(round(-r + s, 12))
            pts.add(round(r + s, 12))
    for s in shifts:
        pts.add(round(s, 12))
    return np.array(sorted(pts))


def packet_velocities(packet: AdmissiblePacket):
    """Slowest and fastest group velocities among incoming and outgoing components."""
    vl, vr = packet.v_left, packet.v_right
    ks, qs = [], []
    for a, b in packet.windows:
        ks += [math.sqrt(a - vl), math.sqrt(b - vl)]
        if a > vr:
            qs += [math.sqrt(a - vr), math.sqrt(b - vr)]
    vmin = 2.0 * min(ks + qs)
    vmax = 2.0 * max(ks + qs)
    return vmin, vmax


def plan_horizon(packet: AdmissiblePacket, r_max: float, margin: float = 1.25) -> float:
    """Horizon after which every component has cleared ``[-r_max, r_max]``."""
    vmin, _ = packet_velocities(packet)
    extent = 8.0 * packet.spread + abs(packet.center_x)
    return margin * (r_max + extent) / vmin


def record_sojourn(phi: SpatialState, potential: Optional[Potential], data: ScatteringData,
                   points: np.ndarray, quad: Quadrature, full: bool = True,
                   pieces: bool = True) -> SojournRecord:
    """Sample cumulative masses of the interacting and free states on ``[-t_max, t_max]``.

    ``phi`` is the incoming asymptote (left-incident).  The interacting state
    starts as the freely back-propagated packet at ``-t_max`` and is evolved
    with the full Hamiltonian; free states use exact multipliers.  With
    ``full=False`` only free states are recorded (the cheap surrogate path).
    """
    vl, vr = data.v_left, data.v_right
    dt = quad.dt or default_dt(phi.dx)
    m = max(1, int(round(quad.sample_dt / dt)))
    n_half = int(math.ceil(quad.t_max / (m * dt)))
    h = quad.t_max / (n_half * m)  # exact landing on 0 and t_max
    times = h * m * np.arange(-n_half, n_half + 1)
    x = phi.x
    out_state = scatter_state(phi, data)
    refl, trans = None, None
    if pieces:
        refl, trans, _, _ = scatter_state(phi, data, parts=True)
    keys = ["in", "out"] + (["refl", "trans"] if pieces else []) + (["full"] if full else [])
    cum = {k: np.empty((times.size, points.size)) for k in keys}
    p = phi.p
    k_in = np.where(p > 0, vl, vr)
    k_out = np.where(p > 0, vr, vl)
    meta = {"dt": h, "sample_dt": h * m, "t_max": quad.t_max, "tail_fraction": quad.tail_fraction,
            "tail_tol": quad.tail_tol, "grid": [phi.x_min, phi.dx, phi.n]}

    def phase(kappa, t):
        return np.exp(-1j * (p * p + kappa) * t)

    for i, t in enumerate(times):
        vin = inverse_transform(phi.momentum_values * phase(k_in, t), phi.x_min, phi.dx)
        cum["in"][i] = _cumulative(vin, phi.dx, x, points)
        vout = inverse_transform(out_state.momentum_values * phase(k_out, t), phi.x_min, phi.dx)
        cum["out"][i] = _cumulative(vout, phi.dx, x, points)
        if pieces:
            vr_ = inverse_transform(refl.momentum_values * phase(k_out, t), phi.x_min, phi.dx)
            vt_ = inverse_transform(trans.momentum_values * phase(k_out, t), phi.x_min, phi.dx)
            cum["refl"][i] = _cumulative(vr_, phi.dx, x, points)
            cum["trans"][i] = _cumulative(vt_, phi.dx, x, points)
    for edge_t in (times[0], times[-1]):
        v = inverse_transform(phi.momentum_values * phase(k_in, edge_t), phi.x_min, phi.dx)
        _check_leakage(v, phi.dx, quad.leakage_tol, f"free incoming state at t={edge_t:g}")
        v = inverse_transform(out_state.momentum_values * phase(k_out, edge_t), phi.x_min, phi.dx)
        _check_leakage(v, phi.dx, quad.leakage_tol, f"free outgoing state at t={edge_t:g}")

    if full:
        if potential is None:
            raise ValueError("the full path needs the potential")
        start = evolve_in_free(phi, vl, vr, times[0])
        prop = SplitStep(potential, phi.x_min, phi.dx, phi.n, h)
        u = start.values
        norm0 = start.norm2
        for i in range(times.size):
            if i > 0:
                u = prop.advance(u, m)
            cum["full"][i] = _cumulative(u, phi.dx, x, points)
            if i == n_half:
                psi0 = phi.with_values(u)
        drift = abs(float(np.sum(np.abs(u) ** 2) * phi.dx) - norm0)
        if drift > 1e-6:
            raise CertificateError("norm-drift", f"split-step norm changed by {drift:.3g}")
        _check_leakage(u, phi.dx, quad.leakage_tol, f"interacting state at t={times[-1]:g}")
        # Cauchy defect of the Moller approximant between horizons T/2 and T
        half = _moller(phi, potential, vl, vr, 0.5 * quad.t_max, h, quad.leakage_tol)
        defect = math.sqrt(np.sum(np.abs(half.values - psi0.values) ** 2) * phi.dx)
        meta["moller_defect"] = defect
        meta["norm_drift"] = drift
        if defect > quad.moller_tol:
            raise CertificateError("moller-defect", f"defect {defect:.3g} exceeds {quad.moller_tol:g}")
    return SojournRecord(times, points, cum, meta)


def sojourn_times(phi, potential: Potential, data: ScatteringData, r_values,
                  quad: Optional[Quadrature] = None, shifts: Sequence[float] = ()) -> SojournCurve:
    """``T_full``, ``T_in`` and ``T_out`` over ``[-R, R]`` for every ``R``."""
    state = phi.state if isinstance(phi, AdmissiblePacket) else phi
    r_values = np.asarray(r_values, dtype=np.float64)
    if quad is None:
        if not isinstance(phi, AdmissiblePacket):
            raise ValueError("pass a Quadrature for bare states")
        quad = Quadrature(plan_horizon(phi, float(r_values.max())))
    rec = record_sojourn(state, potential, data, probe_points(r_values, shifts), quad)
    return curve_from_record(rec, r_values)


def curve_from_record(rec: SojournRecord, r_values) -> SojournCurve:
    r_values = np.asarray(r_values, dtype=np.float64)
    cols = {k: [] for k in ("full", "in", "out")}
    tails = {k: [] for k in cols}
    for r in r_values:
        for k in cols:
            val, tail = rec.sojourn(k, -r, r)
            cols[k].append(val)
            tails[k].append(tail)
    worst = max(max(v) for v in tails.values())
    scale = max(1.0, max(max(np.abs(v)) for v in cols.values()))
    meta = dict(rec.meta)
    meta["tail_max"] = worst
    if not math.isfinite(worst) or worst > rec.meta.get("tail_tol", 1e-3) * scale:
        raise CertificateError("quadrature-tail", f"tail estimate {worst:.3g} too large")
    return SojournCurve(r_values, np.array(cols["full"]), np.array(cols["in"]),
                        np.array(cols["out"]), meta, rec)


# -- free-evolution diagnostics ---------------------------------------------

def free_sojourn_prediction(phi: SpatialState, x1: float, x2: float) -> float:
    """``(x2 - x1) / 2 * int |phi_hat(p)|^2 / |p| dp`` on the FFT momenta."""
    p = phi.p
    w = np.abs(phi.momentum_values) ** 2
    nz = p != 0
    return 0.5 * (x2 - x1) * float(np.sum(w[nz] / np.abs(p[nz])) * phi.dp)


def free_sojourn_time(phi: SpatialState, kappa: float, x1: float, x2: float, t_max: float,
                      sample_dt: float = 0.05, tail_fraction: float = 0.2):
    """Dynamically integrated ``int dt int_{x1}^{x2} |exp(-i H_kappa t) phi|^2``.

    Returns ``(value, tail_magnitude)``.
    """
    n_half = int(math.ceil(t_max / sample_dt))
    times = (t_max / n_half) * np.arange(-n_half, n_half + 1)
    pts = np.array([x1, x2])
    x = phi.x
    cum = np.empty((times.size, 2))
    for i, t in enumerate(times):
        cum[i] = _cumulative(evolve_channel(phi, kappa, t).values, phi.dx, x, pts)
    rec = SojournRecord(times, pts, {"free": cum}, {"tail_fraction": tail_fraction})
    return rec.sojourn("free", x1, x2)


def left_tail_mass(phi: SpatialState, times: Sequence[float], kappa: float = 0.0) -> np.ndarray:
    """``int_{x < 0} |exp(-i H_kappa t) phi|^2`` restricted to the grid."""
    left = phi.x < 0
    return np.array([float(np.sum(np.abs(evolve_channel(phi, kappa, t).values[left]) ** 2) * phi.dx)
                     for t in times])


def weighted_mass(phi: SpatialState, times: Sequence[float], mu: float = 2.0,
                  kappa: float = 0.0) -> np.ndarray:
    """``int |(1 + |x|)^-mu exp(-i H_kappa t) phi|^2``."""
    w = (1.0 + np.abs(phi.x)) ** (-2.0 * mu)
    return np.array([float(np.sum(w * np.abs(evolve_channel(phi, kappa, t).values) ** 2) * phi.dx)
                     for t in times])


def decay_exponent(times, values) -> float:
    """Least-squares slope of ``-log(values)`` against ``log(times)``."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    return float(-np.polyfit(np.log(t), np.log(v), 1)[0])
