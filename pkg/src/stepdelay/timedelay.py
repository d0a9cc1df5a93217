"""Local and global time delays, their spectral counterparts and diagnostics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dynamics import (Quadrature, SojournCurve, SojournRecord, curve_from_record,
                       plan_horizon, probe_points, record_sojourn)
from .spectral import AdmissiblePacket, TwoChannelSpectral, apply_s
from .stationary import CertificateError, ScatteringData, ThresholdError

IMAG_TOL = 1e-8
PLATEAU_REL = 0.01
PLATEAU_FLOOR = 1e-3


class PlateauError(RuntimeError):
    """No plateau in the sampled radii."""


# -- local delays -----------------------------------------------------------

def local_time_delays(curve: SojournCurve):
    """``(tau_in, tau_out, tau_sym)`` per radius."""
    tau_in = curve.t_full - curve.t_in
    tau_out = curve.t_full - curve.t_out
    return tau_in, tau_out, 0.5 * (tau_in + tau_out)


# -- spectral quantities ----------------------------------------------------

def _live(spec: TwoChannelSpectral):
    peak = max(np.abs(spec.comp_l).max(initial=0.0), np.abs(spec.comp_r).max(initial=0.0))
    if peak == 0.0:
        return np.zeros(spec.e_grid.shape, dtype=bool)
    return (np.abs(spec.comp_l) > 1e-13 * peak) | (np.abs(spec.comp_r) > 1e-13 * peak)


def ew_expectation(phi_in: TwoChannelSpectral, data: ScatteringData,
                   imag_tol: float = IMAG_TOL) -> float:
    """``<phi, T phi>`` by quadrature of ``conj(phi_in(E)) T(E) phi_in(E)``."""
    if phi_in.rep != "in":
        raise ValueError("ew_expectation needs the in-representation")
    live = _live(phi_in)
    if not np.any(live):
        return 0.0
    e = phi_in.e_grid[live]
    if not data.covers(e.min(), e.max()):
        raise ThresholdError("packet support extends beyond the scattering data")
    rad = data.tolerances.get("exclusion_radius", 0.0)
    if np.any(np.abs(e - data.v_right) < rad) or np.any(e - data.v_left < rad):
        raise ThresholdError("packet support overlaps a threshold exclusion zone")
    cl = phi_in.comp_l[live]
    cr = phi_in.comp_r[live]
    w = phi_in.weights[live]
    t_ll = data.interpolator("ll", "t")(e)
    dens = np.conj(cl) * t_ll * cl
    # the residue is judged against the size of T, not of <phi, T phi>,
    # which can vanish identically (e.g. a zero diagonal entry)
    t_size = np.abs(t_ll) ** 2
    two = e > data.v_right
    if np.any(two):
        et = e[two]
        a, b = cl[two], cr[two]
        t_lr, t_rl, t_rr = (data.interpolator(key, "t")(et) for key in ("lr", "rl", "rr"))
        dens[two] += np.conj(a) * t_lr * b + np.conj(b) * t_rl * a + np.conj(b) * t_rr * b
        t_size[two] += np.abs(t_lr) ** 2 + np.abs(t_rl) ** 2 + np.abs(t_rr) ** 2
    size = (np.abs(cl) ** 2 + np.abs(cr) ** 2) * np.sqrt(t_size)
    total = complex(np.sum(w * dens))
    scale = float(np.sum(w * size))
    # T itself is only known to within the certified derivative error
    derr = max((t.derivative_error for t in data.t if t is not None), default=0.0)
    allowance = derr * float(np.sum(w * (np.abs(cl) ** 2 + np.abs(cr) ** 2)))
    if abs(total.imag) > max(imag_tol * scale, allowance, 1e-300):
        raise CertificateError("hermiticity", f"imaginary residue {total.imag:.3g}")
    return total.real


def divergence_coefficient(phi_in: TwoChannelSpectral, data: ScatteringData) -> float:
    """Growth rate of ``tau_in`` in ``R``:
    ``(1/2) int |(S phi)_r^out|^2 ((E - V_r)^-1/2 - (E - V_l)^-1/2) dE``."""
    out = apply_s(phi_in, data)
    e = out.e_grid
    above = e > data.v_right
    if not np.any(above) or data.v_left == data.v_right:
        return 0.0
    diff = np.zeros_like(e)
    diff[above] = (e[above] - data.v_right) ** -0.5 - (e[above] - data.v_left) ** -0.5
    return 0.5 * float(np.sum(out.weights * np.abs(out.comp_r) ** 2 * diff))


def natural_time_scale(phi_in: TwoChannelSpectral) -> float:
    """``int |phi_hat(p)|^2 / |p| dp``: sojourn time per unit length of the free packet."""
    e = phi_in.e_grid
    val = np.abs(phi_in.comp_l) ** 2 / np.sqrt(e - phi_in.v_left)
    above = e > phi_in.v_right
    val[above] += np.abs(phi_in.comp_r[above]) ** 2 / np.sqrt(e[above] - phi_in.v_right)
    return float(np.sum(phi_in.weights * val))


def channel_norms(phi_in: TwoChannelSpectral, data: ScatteringData):
    """``(||S_ll phi||^2, ||S_rl phi||^2)`` for a left-incident packet."""
    out = apply_s(phi_in, data)
    return out.channel_norm2("left"), out.channel_norm2("right")


def translation_correction(phi_in: TwoChannelSpectral, data: ScatteringData) -> float:
    """Coefficient ``c`` with ``tau^{x0} = tau + c x0`` for a left-incident packet.

    ``c = (1/2) int |S_rl|^2 |phi|^2 (1/k_r - 1/k_l) dE - int |S_ll|^2 |phi|^2 / k_l dE``.
    """
    out = apply_s(phi_in, data)
    e = out.e_grid
    kl = np.sqrt(e - data.v_left)
    refl = np.abs(out.comp_l) ** 2 / kl
    trans = np.zeros_like(e)
    above = e > data.v_right
    trans[above] = np.abs(out.comp_r[above]) ** 2 * (1.0 / np.sqrt(e[above] - data.v_right)
                                                     - 1.0 / kl[above])
    w = out.weights
    return 0.5 * float(np.sum(w * trans)) - float(np.sum(w * refl))


def translated_delay(phi_in: TwoChannelSpectral, data: ScatteringData, x0: float,
                     tau: Optional[float] = None) -> float:
    """Global delay for the window ``[-R + x0, R + x0]``."""
    if tau is None:
        tau = ew_expectation(phi_in, data)
    return tau + x0 * translation_correction(phi_in, data)


# -- fits and plateaus ------------------------------------------------------

@dataclass(frozen=True)
class DivergenceFit:
    slope: float
    intercept: float
    ci: float
    n: int


def fit_divergence(r_values, tau, window: Optional[Sequence[float]] = None,
                   confidence: float = 0.95) -> DivergenceFit:
    """Least-squares line through ``tau(R)`` on ``window``; ``ci`` is the slope half-width."""
    r = np.asarray(r_values, dtype=np.float64)
    y = np.asarray(tau, dtype=np.float64)
    if window is not None:
        sel = (r >= window[0]) & (r <= window[1])
        r, y = r[sel], y[sel]
    if r.size < 5:
        raise ValueError(f"fit window holds {r.size} radii; at least 5 are required")
    res = stats.linregress(r, y)
    q = stats.t.ppf(0.5 + 0.5 * confidence, r.size - 2)
    return DivergenceFit(float(res.slope), float(res.intercept), float(q * res.stderr), int(r.size))


@dataclass(frozen=True)
class Plateau:
    value: float
    spread: float
    start: int
    r_start: float


def plateau(r_values, values, rel: float = PLATEAU_REL, floor: float = PLATEAU_FLOOR,
            min_points: int = 4) -> Plateau:
    """Longest trailing run of samples with ``max - min < max(rel |mean|, floor)``."""
    r = np.asarray(r_values, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if v.size < min_points:
        raise PlateauError(f"need at least {min_points} radii")
    best = None
    for start in range(v.size - min_points, -1, -1):
        tail = v[start:]
        if tail.max() - tail.min() < max(rel * abs(tail.mean()), floor):
            best = start
        else:
            break
    if best is None:
        tail = v[-min_points:]
        raise PlateauError(f"no plateau: last {min_points} values spread {tail.max() - tail.min():.3g}")
    tail = v[best:]
    return Plateau(float(tail.mean()), float(tail.max() - tail.min()), best, float(r[best]))


def symmetrized_global_delay(curve: SojournCurve, **kwargs) -> Plateau:
    """Plateau of ``tau_sym(R)``."""
    return plateau(curve.r_values, local_time_delays(curve)[2], **kwargs)


# -- surrogates, decomposition, translated windows --------------------------

def _record(phi, data, r_values, quad, shifts=(), full=True, potential=None):
    state = phi.state if isinstance(phi, AdmissiblePacket) else phi
    if quad is None:
        quad = Quadrature(plan_horizon(phi, float(np.max(r_values))))
    return record_sojourn(state, potential, data, probe_points(r_values, shifts), quad,
                          full=full, pieces=full)


def sigma_surrogates(phi, data: ScatteringData, r_values, quad: Optional[Quadrature] = None,
                     record: Optional[SojournRecord] = None):
    """``(sigma_in(R), sigma_out(R))`` from free evolutions of ``phi`` and ``S phi`` only."""
    r_values = np.asarray(r_values, dtype=np.float64)
    if record is None and quad is None:
        # free evolutions are exact at any time, so a coarser clock suffices
        quad = Quadrature(plan_horizon(phi, float(np.max(r_values))), sample_dt=0.25)
    rec = record or _record(phi, data, r_values, quad, full=False)
    s_in, s_out = [], []
    for r in r_values:
        diff = rec.window("out", -r, r) - rec.window("in", -r, r)
        s_in.append(rec.integrate(diff, "pos")[0])
        s_out.append(-rec.integrate(diff, "neg")[0])
    return np.array(s_in), np.array(s_out)


def lr_decomposition(phi, data: ScatteringData, quad: Optional[Quadrature] = None,
                     r: Optional[float] = None, record: Optional[SojournRecord] = None,
                     potential=None):
    """``(tau_l, tau_r)`` at radius ``r`` (left and right half-windows)."""
    if record is None:
        if r is None or potential is None:
            raise ValueError("pass a record, or a radius and the potential")
        record = _record(phi, data, [r], quad, potential=potential)
    if r is None:
        r = float(np.max(np.abs(record.points)))
    left = (record.window("full", -r, 0.0) - record.window("in", -r, 0.0)
            - record.window("refl", -r, 0.0))
    right = record.window("full", 0.0, r) - record.window("trans", 0.0, r)
    return record.integrate(left)[0], record.integrate(right)[0]


def translated_sym_delay(record: SojournRecord, r_values, x0: float) -> np.ndarray:
    """Dynamical ``tau_sym(R)`` on the windows ``[-R + x0, R + x0]``."""
    out = []
    for r in r_values:
        a, b = -r + x0, r + x0
        full = record.sojourn("full", a, b)[0]
        tin = record.sojourn("in", a, b)[0]
        tout = record.sojourn("out", a, b)[0]
        out.append(full - 0.5 * (tin + tout))
    return np.array(out)


# -- report -----------------------------------------------------------------

@dataclass
class TimeDelayReport:
    r_values: list
    tau_in: list
    tau_out: list
    tau_sym: list
    sigma_in: list
    sigma_out: list
    tau_ew: float
    tau_plateau: float
    tau_plateau_spread: float
    divergence_slope_fit: float
    divergence_slope_ci: float
    divergence_slope_out_fit: float
    divergence_slope_predicted: float
    tau_l: Optional[float] = None
    tau_r: Optional[float] = None
    error_budget: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def curve_rows(self):
        return np.column_stack([self.r_values, self.tau_in, self.tau_out, self.tau_sym,
                                self.sigma_in, self.sigma_out])

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def build_report(packet: AdmissiblePacket, potential, data: ScatteringData, r_values,
                 quad: Optional[Quadrature] = None, fit_points: int = 6,
                 record: Optional[SojournRecord] = None) -> TimeDelayReport:
    """Run the full and surrogate paths and assemble every delay quantity.

    A ``record`` from an earlier run with the same radii is reused as is.
    """
    r_values = np.asarray(r_values, dtype=np.float64)
    rec = record or _record(packet, data, r_values, quad, potential=potential)
    curve = curve_from_record(rec, r_values)
    tau_in, tau_out, tau_sym = local_time_delays(curve)
    s_in, s_out = sigma_surrogates(packet, data, r_values, record=rec)
    spec = packet.in_representation()
    tau_ew = ew_expectation(spec, data)
    plat = plateau(r_values, tau_sym)
    window = (r_values[-fit_points], r_values[-1])
    fit_in = fit_divergence(r_values, tau_in, window)
    fit_out = fit_divergence(r_values, tau_out, window)
    tau_l, tau_r = lr_decomposition(packet, data, record=rec, r=float(r_values[-1]))
    derr = max((t.derivative_error for t in data.t if t is not None), default=0.0)
    budget = {"moller_defect": rec.meta.get("moller_defect", 0.0),
              "quadrature_tail": curve.meta.get("tail_max", 0.0),
              "derivative": derr, "plateau_spread": plat.spread}
    return TimeDelayReport(r_values.tolist(), tau_in.tolist(), tau_out.tolist(), tau_sym.tolist(),
                           s_in.tolist(), s_out.tolist(), tau_ew, plat.value, plat.spread,
                           fit_in.slope, fit_in.ci, fit_out.slope,
                           divergence_coefficient(spec, data), tau_l, tau_r, budget,
                           {"potential": data.potential_id, "quadrature": rec.meta})
