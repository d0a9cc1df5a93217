"""Grid states, the in/out energy representations and the action of S on packets.

Fourier convention: ``phi_hat(p) = (2 pi)^(-1/2) int exp(-i p x) phi(x) dx``.
A grid state carries its momentum image on the FFT momenta
``p = 2 pi fftfreq(n, dx)``; off-grid momenta are evaluated with the exact
discrete-time Fourier sum in :mod:`stepdelay.kernels`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .stationary import ScatteringData, ThresholdError

SUPPORT_FLOOR = 1e-13
DEFAULT_THETA = 5
DEFAULT_ENERGY_POINTS = 2048


class RepresentationError(ValueError):
    """Wrong representation tag or incompatible grids."""


class PacketError(ValueError):
    """Packet request cannot be honoured (windows, leakage)."""


# -- grid states ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpatialState:
    """Complex wavefunction on ``x_min + dx * arange(n)`` with cached momentum image."""

    x_min: float
    dx: float
    values: np.ndarray
    momentum_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        mom = forward_transform(vals, self.x_min, self.dx)
        mom.setflags(write=False)
        object.__setattr__(self, "momentum_values", mom)

    @classmethod
    def from_momentum(cls, x_min: float, dx: float, phat: np.ndarray) -> "SpatialState":
        return cls(x_min, dx, inverse_transform(phat, x_min, dx))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def p(self) -> np.ndarray:
        return momenta(self.n, self.dx)

    @property
    def dp(self) -> float:
        return 2.0 * math.pi / (self.n * self.dx)

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)

    @property
    def momentum_norm2(self) -> float:
        return float(np.sum(np.abs(self.momentum_values) ** 2) * self.dp)

    def phat_at(self, p) -> np.ndarray:
        """Exact transform of the grid function at arbitrary momenta."""
        return kernels.dtft(self.values, self.x_min, self.dx, np.asarray(p, dtype=np.float64),
                            floor=1e-17)

    def same_grid(self, other: "SpatialState") -> bool:
        return self.n == other.n and self.x_min == other.x_min and self.dx == other.dx

    def with_values(self, values) -> "SpatialState":
        return SpatialState(self.x_min, self.dx, values)

    def with_momentum(self, phat) -> "SpatialState":
        return SpatialState.from_momentum(self.x_min, self.dx, phat)

    def __add__(self, other: "SpatialState") -> "SpatialState":
        if not self.same_grid(other):
            raise RepresentationError("states live on different grids")
        return self.with_values(self.values + other.values)

    def inner(self, other: "SpatialState") -> complex:
        return complex(np.vdot(self.values, other.values) * self.dx)

    def to_csv_rows(self):
        return np.column_stack([self.x, self.values.real, self.values.imag])


def momenta(n: int, dx: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.fftfreq(n, dx)


def forward_transform(values, x_min, dx):
    n = values.shape[0]
    p = momenta(n, dx)
    return np.fft.fft(values) * (dx / math.sqrt(2.0 * math.pi)) * np.exp(-1j * p * x_min)


def inverse_transform(phat, x_min, dx):
    n = phat.shape[0]
    p = momenta(n, dx)
    return np.fft.ifft(np.asarray(phat) * np.exp(1j * p * x_min)) * (math.sqrt(2.0 * math.pi) / dx)


def uniform_grid(n: int, dx: float, center: float = 0.0):
    """``(x_min, dx, n)`` for an FFT grid centred on ``center``."""
    return center - 0.5 * n * dx, dx, n


def parity(phi: SpatialState) -> SpatialState:
    """``(J phi)^(p) = phi^(-p)``, implemented on the DFT index set (an exact involution)."""
    idx = (-np.arange(phi.n)) % phi.n
    return phi.with_momentum(phi.momentum_values[idx])


def time_reverse(phi: SpatialState) -> SpatialState:
    """Pointwise complex conjugation."""
    return phi.with_values(np.conj(phi.values))


def project_positive(phi: SpatialState) -> SpatialState:
    """Keep ``p > 0``.  The ``p = 0`` mode sits on a threshold and belongs to neither half."""
    return phi.with_momentum(np.where(phi.p > 0, phi.momentum_values, 0.0))


def project_negative(phi: SpatialState) -> SpatialState:
    return phi.with_momentum(np.where(phi.p < 0, phi.momentum_values, 0.0))


# -- energy representations -------------------------------------------------

def trapezoid_weights(e_grid: np.ndarray, breaks: Sequence[float] = ()) -> np.ndarray:
    """Composite trapezoid weights; segments are split at ``breaks`` and at gaps."""
    e = np.asarray(e_grid, dtype=np.float64)
    w = np.zeros_like(e)
    if e.size < 2:
        return w
    d = np.diff(e)
    cut = d > 10.0 * np.min(d)
    for b in breaks:
        cut |= (e[:-1] < b) & (e[1:] > b)
    for i in range(d.size):
        if not cut[i]:
            w[i] += 0.5 * d[i]
            w[i + 1] += 0.5 * d[i]
    return w


@dataclass(eq=False)
class TwoChannelSpectral:
    """Two-component function of energy in the in- or out-representation."""

    e_grid: np.ndarray
    comp_l: np.ndarray
    comp_r: np.ndarray
    rep: str
    v_left: float
    v_right: float
    source: Optional[tuple] = None  # (x_min, dx, n) of the originating grid state

    def __post_init__(self):
        if self.rep not in ("in", "out"):
            raise RepresentationError(f"rep must be 'in' or 'out', got {self.rep!r}")
        self.e_grid = np.asarray(self.e_grid, dtype=np.float64)
        self.comp_l = np.asarray(self.comp_l, dtype=np.complex128)
        self.comp_r = np.asarray(self.comp_r, dtype=np.complex128)
        below = self.e_grid <= self.v_right
        if np.any(self.comp_r[below] != 0):
            raise RepresentationError("right component must vanish at or below V_r")

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.e_grid, (self.v_right,))

    @property
    def norm2(self) -> float:
        return float(np.sum(self.weights * (np.abs(self.comp_l) ** 2 + np.abs(self.comp_r) ** 2)))

    def channel_norm2(self, side: str) -> float:
        c = self.comp_l if side == "left" else self.comp_r
        return float(np.sum(self.weights * np.abs(c) ** 2))

    def replace(self, comp_l, comp_r, rep) -> "TwoChannelSpectral":
        return TwoChannelSpectral(self.e_grid, comp_l, comp_r, rep, self.v_left, self.v_right,
                                  self.source)


def _check_grid_energies(e_grid, v_left, v_right):
    e = np.asarray(e_grid, dtype=np.float64)
    if np.any(np.diff(e) <= 0):
        raise RepresentationError("energy grid must be strictly increasing")
    if np.any(e <= v_left) or np.any(e == v_right):
        raise ThresholdError("energy grid touches a threshold")
    return e


def _flux_factor(e, v):
    return (4.0 * (e - v)) ** -0.25


def phat_supported(phi: SpatialState, p, floor: float = SUPPORT_FLOOR, pad: int = 4,
                   reference: Optional[float] = None) -> np.ndarray:
    """Transform at arbitrary momenta, zero away from the sampled support.

    Momenta farther than ``pad`` grid spacings from every FFT momentum where
    ``|phi_hat|`` exceeds ``floor`` times ``reference`` (default: its own
    peak) are set to zero, which removes interpolation ripple where the state
    has no weight.
    """
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros(p.shape, dtype=np.complex128)
    live = _support_mask(phi.momentum_values, floor, reference)
    if not np.any(live) or p.size == 0:
        return out
    grid_p = np.sort(phi.p[live])
    pos = np.searchsorted(grid_p, p)
    left = np.abs(p - grid_p[np.clip(pos - 1, 0, grid_p.size - 1)])
    right = np.abs(grid_p[np.clip(pos, 0, grid_p.size - 1)] - p)
    near = np.minimum(left, right) <= pad * phi.dp
    if np.any(near):
        out[near] = phi.phat_at(p[near])
    return out


def _represent(phi: SpatialState, v_left, v_right, e_grid, sign_l, sign_r, rep):
    e = _check_grid_energies(e_grid, v_left, v_right)
    # each channel reads its own momentum half-line, so project first
    half_l = project_positive(phi) if sign_l > 0 else project_negative(phi)
    half_r = project_positive(phi) if sign_r > 0 else project_negative(phi)
    ref = float(np.abs(phi.momentum_values).max())
    kl = np.sqrt(e - v_left)
    comp_l = _flux_factor(e, v_left) * phat_supported(half_l, sign_l * kl, reference=ref)
    comp_r = np.zeros_like(comp_l)
    above = e > v_right
    if np.any(above):
        kr = np.sqrt(e[above] - v_right)
        comp_r[above] = _flux_factor(e[above], v_right) * phat_supported(half_r, sign_r * kr, reference=ref)
    return TwoChannelSpectral(e, comp_l, comp_r, rep, v_left, v_right, (phi.x_min, phi.dx, phi.n))


def to_in_representation(phi: SpatialState, v_left: float, v_right: float,
                         e_grid) -> TwoChannelSpectral:
    """Left channel from positive momenta at ``sqrt(E - V_l)``, right channel from
    negative momenta at ``-sqrt(E - V_r)``."""
    return _represent(phi, v_left, v_right, e_grid, +1.0, -1.0, "in")


def to_out_representation(phi: SpatialState, v_left: float, v_right: float,
                          e_grid) -> TwoChannelSpectral:
    """Left channel from negative momenta at ``-sqrt(E - V_l)``, right channel from
    positive momenta at ``sqrt(E - V_r)``."""
    return _represent(phi, v_left, v_right, e_grid, -1.0, +1.0, "out")


def _spline_eval(e_grid, comp, e_query):
    out = np.zeros(e_query.shape, dtype=np.complex128)
    if e_grid.size < 4:
        return out
    inside = (e_query >= e_grid[0]) & (e_query <= e_grid[-1])
    if np.any(inside):
        sr = CubicSpline(e_grid, comp.real)
        si = CubicSpline(e_grid, comp.imag)
        out[inside] = sr(e_query[inside]) + 1j * si(e_query[inside])
    return out


def _segments(e_grid, v_right):
    d = np.diff(e_grid)
    cut = np.nonzero((d > 10.0 * np.min(d)) | ((e_grid[:-1] < v_right) & (e_grid[1:] > v_right)))[0]
    bounds = np.concatenate([[0], cut + 1, [e_grid.size]])
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _interp_component(spec: TwoChannelSpectral, comp, e_query):
    out = np.zeros(e_query.shape, dtype=np.complex128)
    for sl in _segments(spec.e_grid, spec.v_right):
        out += _spline_eval(spec.e_grid[sl], comp[sl], e_query)
    return out


def from_out_representation(spec: TwoChannelSpectral, grid: Optional[tuple] = None) -> SpatialState:
    """Rebuild the grid state from its out-representation.

    Positive FFT momenta are filled from the right component at
    ``E = p^2 + V_r``, negative ones from the left component at ``E = p^2 + V_l``.
    Energies outside the sampled grid are taken as zero.
    """
    if spec.rep != "out":
        raise RepresentationError("from_out_representation needs rep='out'")
    grid = grid or spec.source
    if grid is None:
        raise RepresentationError("no target grid: pass (x_min, dx, n)")
    x_min, dx, n = grid
    p = momenta(n, dx)
    phat = np.zeros(n, dtype=np.complex128)
    pos = p > 0
    neg = p < 0
    e_pos = p[pos] ** 2 + spec.v_right
    e_neg = p[neg] ** 2 + spec.v_left
    phat[pos] = np.sqrt(2.0 * p[pos]) * _interp_component(spec, spec.comp_r, e_pos)
    phat[neg] = np.sqrt(-2.0 * p[neg]) * _interp_component(spec, spec.comp_l, e_neg)
    return SpatialState.from_momentum(x_min, dx, phat)


# -- the scattering operator ------------------------------------------------

class _SInterp:
    """S entries as splines of energy built from a sweep."""

    def __init__(self, data: ScatteringData):
        self.data = data
        self.ll = data.interpolator("ll")
        has_two = np.any(data.energies > data.v_right)
        self.rl = data.interpolator("rl") if has_two else None
        self.rr = data.interpolator("rr") if has_two else None
        self.lr = data.interpolator("lr") if has_two else None

    def entries(self, energy):
        energy = np.asarray(energy, dtype=np.float64)
        two = energy > self.data.v_right
        ll = np.zeros(energy.shape, dtype=np.complex128)
        rl = np.zeros_like(ll)
        rr = np.zeros_like(ll)
        lr = np.zeros_like(ll)
        if energy.size:
            ll[:] = self.ll(energy)
        if np.any(two):
            if self.rl is None:
                raise ThresholdError("scattering data has no two-channel energies")
            rl[two] = self.rl(energy[two])
            rr[two] = self.rr(energy[two])
            lr[two] = self.lr(energy[two])
        return ll, rl, rr, lr


def _support_mask(values, floor=SUPPORT_FLOOR, reference=None):
    mag = np.abs(values)
    peak = reference if reference is not None else (mag.max() if mag.size else 0.0)
    return mag > floor * peak if peak > 0 else np.zeros(mag.shape, dtype=bool)


def _check_support(energies, data: ScatteringData):
    if energies.size == 0:
        return
    radius = data.tolerances.get("exclusion_radius", 0.0)
    for v in (data.v_left, data.v_right):
        if np.any(np.abs(energies - v) < radius * (1 - 1e-9)):
            raise ThresholdError("packet support overlaps a threshold exclusion zone")
    for sel in (energies < data.v_right, energies > data.v_right):
        e = energies[sel]
        if e.size == 0:
            continue
        ref = data.energies[(data.energies < data.v_right) if e[0] < data.v_right
                            else (data.energies > data.v_right)]
        if ref.size == 0 or e.min() < ref[0] - 1e-12 or e.max() > ref[-1] + 1e-12:
            raise ThresholdError("packet support extends beyond the scattering data")


def apply_s(phi_in: TwoChannelSpectral, data: ScatteringData) -> TwoChannelSpectral:
    """``(S phi)^out(E) = S(E) phi^in(E)`` with the layout ``[[s_rl, s_rr], [s_ll, s_lr]]``."""
    if phi_in.rep != "in":
        raise RepresentationError("apply_s needs an in-representation")
    if phi_in.v_left != data.v_left or phi_in.v_right != data.v_right:
        raise RepresentationError("thresholds of the packet and the scattering data differ")
    live = _support_mask(phi_in.comp_l) | _support_mask(phi_in.comp_r)
    e = phi_in.e_grid[live]
    _check_support(e, data)
    ll, rl, rr, lr = _SInterp(data).entries(e)
    out_l = np.zeros_like(phi_in.comp_l)
    out_r = np.zeros_like(phi_in.comp_r)
    cl = phi_in.comp_l[live]
    cr = phi_in.comp_r[live]
    out_r[live] = rl * cl + rr * cr
    out_l[live] = ll * cl + lr * cr
    return phi_in.replace(out_l, out_r, "out")


def scatter_state(phi: SpatialState, data: ScatteringData, parts: bool = False):
    """``S phi`` as a grid state, built directly on the FFT momenta.

    With ``parts=True`` returns ``(S_ll phi, S_rl phi, S_lr phi, S_rr phi)``:
    the contributions of the left-incoming part to the reflected (negative
    momentum) and transmitted (positive momentum) channels, then those of
    the right-incoming part.
    """
    vl, vr = data.v_left, data.v_right
    p = phi.p
    phat = phi.momentum_values
    s = _SInterp(data)
    refl_l = np.zeros(phi.n, dtype=np.complex128)
    trans_l = np.zeros_like(refl_l)
    refl_r = np.zeros_like(refl_l)
    trans_r = np.zeros_like(refl_l)
    ref = float(np.abs(phat).max())
    mask = _support_mask(phat, reference=ref)

    # outgoing to the left: target momentum -k, k = sqrt(E - V_l) > 0
    tgt = np.nonzero(p < 0)[0]
    k = -p[tgt]
    e = k * k + vl
    src = (-tgt) % phi.n  # index of +k
    need_l = mask[src]
    q2 = e - vr
    prop = q2 > 0
    qr = np.sqrt(np.where(prop, q2, 0.0))
    phat_mq = np.zeros(tgt.shape, dtype=np.complex128)
    if np.any(prop):
        phat_mq[prop] = phat_supported(project_negative(phi), -qr[prop], reference=ref)
    need_r = prop & (np.abs(phat_mq) > SUPPORT_FLOOR * ref)
    use = need_l | need_r
    _check_support(e[use], data)
    ll, rl, rr, lr = s.entries(e[use])
    refl_l[tgt[use]] = ll * phat[src[use]] * need_l[use]
    ratio = np.zeros(use.sum())
    pr = prop[use]
    ratio[pr] = np.sqrt(k[use][pr] / qr[use][pr])
    refl_r[tgt[use]] = lr * ratio * phat_mq[use] * need_r[use]

    # outgoing to the right: target momentum q > 0, E = q^2 + V_r
    tgt = np.nonzero(p > 0)[0]
    q = p[tgt]
    e = q * q + vr
    kl = np.sqrt(e - vl)
    phat_k = phat_supported(project_positive(phi), kl, reference=ref)
    src = (-tgt) % phi.n  # index of -q
    need_l = np.abs(phat_k) > SUPPORT_FLOOR * ref
    need_r = mask[src]
    use = need_l | need_r
    _check_support(e[use], data)
    ll, rl, rr, lr = s.entries(e[use])
    trans_l[tgt[use]] = rl * np.sqrt(q[use] / kl[use]) * phat_k[use] * need_l[use]
    trans_r[tgt[use]] = rr * phat[src[use]] * need_r[use]

    if parts:
        return tuple(phi.with_momentum(c) for c in (refl_l, trans_l, refl_r, trans_r))
    return phi.with_momentum(refl_l + trans_l + refl_r + trans_r)


def channel_components(phi: SpatialState, data: ScatteringData):
    """``(S_ll phi, S_rl phi)`` for a left-incoming packet."""
    refl, trans, _, _ = scatter_state(phi, data, parts=True)
    return refl, trans


# -- admissible packets -----------------------------------------------------

def smooth_step(u):
    """C-infinity transition from 0 (u <= 0) to 1 (u >= 1)."""
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(over="ignore"):  # 1/u overflows for subnormal u; exp(-inf) = 0 is right
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def bump(u):
    """``exp(-1 / (1 - u^2))`` on (-1, 1), normalised to 1 at 0."""
    u = np.asarray(u, dtype=np.float64)
    inside = np.abs(u) < 1
    out = np.zeros_like(u)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def momentum_window(p, lo, hi, taper=0.25):
    """Flat-top C-infinity window on ``[lo, hi]`` with tapers of relative width ``taper``."""
    w = taper * (hi - lo)
    return smooth_step((p - lo) / w) * smooth_step((hi - p) / w)


@dataclass(frozen=True, eq=False)
class AdmissiblePacket:
    state: SpatialState
    delta1: Optional[tuple]
    delta2: Optional[tuple]
    theta: float
    v_left: float
    v_right: float
    center_x: float = 0.0
    center_p: float = 0.0
    spread: float = 1.0
    retained: float = 1.0

    @property
    def windows(self):
        return [w for w in (self.delta1, self.delta2) if w is not None]

    def energy_grid(self, n: int = DEFAULT_ENERGY_POINTS) -> np.ndarray:
        """``n`` points per declared window, endpoints included."""
        return np.concatenate([np.linspace(a, b, n) for a, b in self.windows])

    def sweep_energies(self, n: int = 128, margin: float = 0.03) -> np.ndarray:
        """Energies for a scattering sweep covering the packet support with a margin."""
        gap = self.v_right - self.v_left
        rad = 0.05 * gap if gap > 0 else 0.05
        parts = []
        for a, b in self.windows:
            m = margin * (b - a)
            lo = max(a - m, self.v_left + rad)
            hi = b + m if b > self.v_right else min(b + m, self.v_right - rad)
            if a > self.v_right:
                lo = max(a - m, self.v_right + rad)
            parts.append(np.linspace(lo, hi, n))
        return np.concatenate(parts)

    def in_representation(self, n: int = DEFAULT_ENERGY_POINTS) -> TwoChannelSpectral:
        return to_in_representation(self.state, self.v_left, self.v_right, self.energy_grid(n))

    def negative_momentum_fraction(self) -> float:
        m = np.abs(self.state.momentum_values)
        return float(m[self.state.p <= 0].max(initial=0.0) / m.max())

    def weighted_norm2(self, theta: Optional[float] = None) -> float:
        return weighted_norm2(self.state, self.theta if theta is None else theta)


def weighted_norm2(phi: SpatialState, theta: float) -> float:
    """``int (1 + |x|)^(2 theta) |phi|^2 dx`` on the grid."""
    return float(np.sum((1.0 + np.abs(phi.x)) ** (2 * theta) * np.abs(phi.values) ** 2) * phi.dx)


def gaussian_state(x_min, dx, n, center_x, center_p, spread) -> SpatialState:
    """Unit-norm Gaussian ``exp(i p0 (x - xc) - (x - xc)^2 / (4 s^2))`` built from its transform."""
    p = momenta(n, dx)
    amp = (2.0 * math.pi * spread ** 2) ** -0.25 * spread * math.sqrt(2.0)
    phat = amp * np.exp(-1j * p * center_x - spread ** 2 * (p - center_p) ** 2)
    return SpatialState.from_momentum(x_min, dx, phat)


def packet_grid(windows, v_left, n=2 ** 14, dx=None, center=0.0, max_dx=0.2):
    """Default grid: at least 8 points per shortest wavelength."""
    if dx is None:
        e_max = max(w[1] for w in windows)
        p_max = math.sqrt(e_max - v_left)
        dx = min(2.0 * math.pi / p_max / 8.0, max_dx)
    return uniform_grid(n, dx, center)


def make_admissible_packet(center_x: float, center_p: Optional[float], spread: float,
                           windows, v_left: float, v_right: float,
                           theta: float = DEFAULT_THETA, grid: Optional[tuple] = None,
                           taper: float = 0.25, max_leakage: float = 0.25,
                           radius: Optional[float] = None,
                           max_edge: float = 1e-6) -> AdmissiblePacket:
    """Windowed Gaussian incident from the left with energy support in the windows.

    ``windows`` lists up to two energy intervals, one inside ``(V_l, V_r)`` and
    one above ``V_r``.  The Gaussian seed is multiplied in momentum space by a
    smooth flat-top window on the union of the corresponding momentum intervals
    and renormalised.  ``max_leakage`` bounds the fraction of the seed's norm
    removed by the window.
    """
    if not spread > 0:
        raise PacketError("spread must be positive")
    gap = v_right - v_left
    rad = radius if radius is not None else (0.05 * gap if gap > 0 else 0.05)
    d1 = d2 = None
    for w in windows:
        a, b = float(w[0]), float(w[1])
        if not b > a:
            raise PacketError(f"empty window {w}")
        if a - v_left < rad or (a < v_right + rad and b > v_right - rad):
            raise PacketError(f"window {w} touches a threshold")
        if b <= v_right:
            if d1 is not None:
                raise PacketError("at most one window below V_r")
            d1 = (a, b)
        else:
            if d2 is not None:
                raise PacketError("at most one window above V_r")
            d2 = (a, b)
    if d1 is None and d2 is None:
        raise PacketError("at least one energy window is required")
    wins = [w for w in (d1, d2) if w is not None]
    if center_p is None:
        lo, hi = wins[0][0], wins[-1][1]
        center_p = math.sqrt(0.5 * (lo + hi) - v_left)
    x_min, dx, n = grid or packet_grid(wins, v_left)
    seed = gaussian_state(x_min, dx, n, center_x, center_p, spread)
    p = seed.p
    win = np.zeros(n)
    for a, b in wins:
        win += momentum_window(p, math.sqrt(a - v_left), math.sqrt(b - v_left), taper)
    phat = seed.momentum_values * win
    kept = float(np.sum(np.abs(phat) ** 2) * seed.dp / seed.momentum_norm2)
    if 1.0 - kept > max_leakage:
        raise PacketError(f"window removes {1 - kept:.3f} of the seed norm; widen spread")
    phat = phat / math.sqrt(kept * seed.momentum_norm2)
    state = SpatialState.from_momentum(x_min, dx, phat)
    edge = np.abs(state.values[[0, -1]]).max() / np.abs(state.values).max()
    if edge > max_edge:
        raise PacketError(f"packet not contained in the grid (edge amplitude {edge:.2g})")
    return AdmissiblePacket(state, d1, d2, theta, v_left, v_right, center_x, center_p,
                            spread, kept)


def canonical_packet(windows, v_left: float, v_right: float, center_x: float = 0.0,
                     grid: Optional[tuple] = None, sharpness: float = 12.0,
                     theta: float = DEFAULT_THETA) -> AdmissiblePacket:
    """Packet whose Gaussian seed spans ``sharpness`` standard deviations of its window."""
    wins = sorted(tuple(map(float, w)) for w in windows)
    if len(wins) > 1:
        # equal-weight superposition of the single-window packets
        if grid is None:
            grid = packet_grid(wins, v_left)
        parts = [canonical_packet([w], v_left, v_right, center_x, grid, sharpness, theta)
                 for w in wins]
        phat = sum(pk.state.momentum_values for pk in parts)
        norm = math.sqrt(float(np.sum(np.abs(phat) ** 2)) * parts[0].state.dp)
        state = SpatialState.from_momentum(grid[0], grid[1], phat / norm)
        d1 = next((pk.delta1 for pk in parts if pk.delta1 is not None), None)
        d2 = next((pk.delta2 for pk in parts if pk.delta2 is not None), None)
        return AdmissiblePacket(state, d1, d2, theta, v_left, v_right, center_x,
                                float(np.mean([pk.center_p for pk in parts])),
                                max(pk.spread for pk in parts),
                                min(pk.retained for pk in parts))
    p_lo = math.sqrt(wins[0][0] - v_left)
    p_hi = math.sqrt(wins[-1][1] - v_left)
    sigma_p = (p_hi - p_lo) / sharpness
    spread = 1.0 / (2.0 * sigma_p)
    return make_admissible_packet(center_x, 0.5 * (p_lo + p_hi), spread, wins, v_left, v_right,
                                  theta=theta, grid=grid)
