"""Acceptance matrix shared by ``stepdelay verify-all`` and the test suite.

Every criterion returns a :class:`CriterionResult` carrying the measured
quantities next to the tolerance it was judged against.  Expensive
dynamical runs are cached on a :class:`Context` so criteria that share a run
do not repeat it.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import dynamics, spectral, stationary, timedelay
from .potential import make_pure_step, make_smooth_step, make_step_plus_bump


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: Dict[str, float] = field(default_factory=dict)
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        body = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number:2d} {self.name}: {body}"


def _short(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    try:
        return f"{float(v):.6g}"
    except (TypeError, ValueError):
        return str(v)


@dataclass
class DelayRun:
    potential: object
    packet: spectral.AdmissiblePacket
    data: stationary.ScatteringData
    spec: spectral.TwoChannelSpectral
    r_values: np.ndarray
    record: dynamics.SojournRecord
    curve: dynamics.SojournCurve
    seconds: float


BUMP_WINDOW = (1.5, 2.5)
REFLECTION_WINDOW = (0.3, 0.7)
SHIFT = 2.0


class Context:
    """Lazily built, cached experiments."""

    def __init__(self, tol_scale: float = 1.0):
        self.tol_scale = tol_scale
        self._cache = {}

    def cached(self, key, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def delay_run(self, key: str) -> DelayRun:
        return self.cached(("delay", key), lambda: _delay_run(*_RUNS[key]))


_RUNS = {
    "bump": (lambda: make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0), [BUMP_WINDOW],
             np.geomspace(5.0, 80.0, 16), (SHIFT,), None),
    "flat": (lambda: make_step_plus_bump(0.0, 0.0, 0.3, 0.0, 1.0), [BUMP_WINDOW],
             np.geomspace(5.0, 60.0, 12), (), None),
    # the slow reflected packet is wide; incoming/reflected interference
    # keeps tau_sym oscillating until R is a few packet widths
    "reflect": (lambda: make_smooth_step(0.0, 1.0, 1.0), [REFLECTION_WINDOW],
                np.geomspace(20.0, 140.0, 8), (), (2 ** 13, 0.2)),
}


def _delay_run(make_potential, windows, r_values, shifts, grid) -> DelayRun:
    pot = make_potential()
    grid = spectral.uniform_grid(*grid) if grid else None
    packet = spectral.canonical_packet(windows, pot.v_left, pot.v_right, grid=grid)
    data = stationary.scattering_sweep(pot, packet.sweep_energies())
    spec = packet.in_representation()
    quad = dynamics.Quadrature(dynamics.plan_horizon(packet, float(r_values.max())))
    t0 = time.perf_counter()
    rec = dynamics.record_sojourn(packet.state, pot, data,
                                  dynamics.probe_points(r_values, shifts), quad)
    curve = dynamics.curve_from_record(rec, r_values)
    return DelayRun(pot, packet, data, spec, r_values, rec, curve, time.perf_counter() - t0)


# -- criteria ---------------------------------------------------------------

def criterion_1(ctx: Context) -> CriterionResult:
    pot = make_smooth_step(0.0, 1.0, 1.0)
    t0 = time.perf_counter()
    data = stationary.scattering_sweep(pot, np.linspace(1.05, 4.0, 512), with_t=False)
    secs = time.perf_counter() - t0
    uni = float(data.unitarity_defects.max())
    recip = float(np.abs(data.entry_array("rl") - data.entry_array("lr")).max())
    refl = float(np.abs(np.abs(data.entry_array("ll")) - np.abs(data.entry_array("rr"))).max())
    tol = 1e-6 * ctx.tol_scale
    return CriterionResult(1, "S-matrix structure", max(uni, recip, refl) <= tol,
                           {"unitarity": uni, "reciprocity": recip, "reflection": refl,
                            "tol": tol, "seconds": secs})


def step_oracle(energy, v_left=0.0, v_right=1.0):
    kl = math.sqrt(energy - v_left)
    kr = math.sqrt(energy - v_right)
    return 2.0 * math.sqrt(kl * kr) / (kl + kr), (kl - kr) / (kl + kr)


def criterion_2(ctx: Context) -> CriterionResult:
    pot = make_pure_step(0.0, 1.0)
    err_rl = err_ll = err_mod = err_diag = 0.0
    for e in (1.2, 2.0, 3.0):
        sp = stationary.s_matrix_at(pot, e)
        rl, ll = step_oracle(e)
        err_rl = max(err_rl, abs(sp.s_rl - rl))
        err_ll = max(err_ll, abs(sp.s_ll - ll))
        tp = stationary.ew_matrix_at(pot, e)
        err_diag = max(err_diag, abs(tp.t_ll), abs(tp.t_rr))
    for e in (0.25, 0.5, 0.75):
        err_mod = max(err_mod, abs(abs(stationary.s_matrix_at(pot, e).s_ll) - 1.0))
    tol = 1e-6 * ctx.tol_scale
    return CriterionResult(2, "analytic step oracle",
                           max(err_rl, err_ll, err_mod, err_diag) <= tol,
                           {"s_rl_err": err_rl, "s_ll_err": err_ll, "modulus_err": err_mod,
                            "t_diag": err_diag, "tol": tol})


def criterion_3(ctx: Context) -> CriterionResult:
    packet = spectral.canonical_packet([(1.2, 2.8)], 0.0, 0.0,
                                       grid=spectral.uniform_grid(8192, 0.1))
    x1, x2 = -5.0, 7.0
    t0 = time.perf_counter()
    dyn, tail = dynamics.free_sojourn_time(packet.state, 0.0, x1, x2, t_max=60.0)
    secs = time.perf_counter() - t0
    pred = dynamics.free_sojourn_prediction(packet.state, x1, x2)
    rel = abs(dyn - pred) / pred
    tol = 1e-3 * ctx.tol_scale
    return CriterionResult(3, "free sojourn identity", rel <= tol,
                           {"dynamic": dyn, "predicted": pred, "rel_err": rel, "tol": tol,
                            "seconds": secs})


def _central(run: DelayRun):
    tau_sym = timedelay.local_time_delays(run.curve)[2]
    plat = timedelay.plateau(run.r_values, tau_sym)
    ew = timedelay.ew_expectation(run.spec, run.data)
    return plat, ew


def criterion_4(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("bump")
    plat, ew = _central(run)
    tol = max(0.05 * abs(ew), 0.02) * ctx.tol_scale
    diff = abs(plat.value - ew)
    return CriterionResult(4, "central identity", diff <= tol,
                           {"plateau": plat.value, "spread": plat.spread, "tau_ew": ew,
                            "abs_diff": diff, "tol": tol, "seconds": run.seconds})


def error_budget(run: DelayRun, *spreads: float) -> float:
    """Moller defect + quadrature tail + derivative disagreement + plateau spreads."""
    deriv = max((tp.derivative_error for tp in run.data.t if tp is not None), default=0.0)
    meta = run.curve.meta
    return float(meta.get("moller_defect", 0.0) + meta.get("tail_max", 0.0) + deriv + sum(spreads))


def _slopes(run: DelayRun, points: int = 6):
    tau_in, tau_out, _ = timedelay.local_time_delays(run.curve)
    window = (run.r_values[-points], run.r_values[-1])
    return (timedelay.fit_divergence(run.r_values, tau_in, window),
            timedelay.fit_divergence(run.r_values, tau_out, window))


def criterion_5(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("bump")
    fit_in, fit_out = _slopes(run)
    c = timedelay.divergence_coefficient(run.spec, run.data)
    rel_in = abs(fit_in.slope - c) / c
    rel_out = abs(fit_out.slope + c) / c
    flat = ctx.delay_run("flat")
    f_in, f_out = _slopes(flat)
    scale = timedelay.natural_time_scale(flat.spec)
    flat_ratio = max(abs(f_in.slope), abs(f_out.slope)) / scale
    tol = 0.05 * ctx.tol_scale
    ok = rel_in <= tol and rel_out <= tol and flat_ratio <= 0.01 * ctx.tol_scale
    return CriterionResult(5, "divergence structure", ok,
                           {"coefficient": c, "slope_in": fit_in.slope, "slope_out": fit_out.slope,
                            "rel_in": rel_in, "rel_out": rel_out, "flat_slope_ratio": flat_ratio,
                            "tol": tol})


def criterion_6(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("bump")
    tau_sym = timedelay.local_time_delays(run.curve)[2]
    plat_tau = timedelay.plateau(run.r_values, tau_sym)
    t0 = time.perf_counter()
    s_in, s_out = timedelay.sigma_surrogates(run.packet, run.data, run.r_values)
    secs = time.perf_counter() - t0
    plat_sig = timedelay.plateau(run.r_values, 0.5 * (s_in + s_out))
    bars = error_budget(run, plat_tau.spread, plat_sig.spread) * ctx.tol_scale
    diff = abs(plat_tau.value - plat_sig.value)
    speedup = run.seconds / secs
    return CriterionResult(6, "sigma-surrogate equivalence", diff <= bars and speedup >= 5.0,
                           {"tau_plateau": plat_tau.value, "sigma_plateau": plat_sig.value,
                            "abs_diff": diff, "error_bars": bars, "speedup": speedup})


def criterion_7(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("reflect")
    n_ll, n_rl = timedelay.channel_norms(run.spec, run.data)
    trans_norm = math.sqrt(n_rl)
    tau_in, tau_out, _ = timedelay.local_time_delays(run.curve)
    quad_tol = run.record.meta["tail_tol"]
    sym_gap = float(np.abs(tau_in - tau_out).max())
    plat, ew = _central(run)
    rel = abs(plat.value - ew) / abs(ew)
    # diagnostic only: resolution is limited by the split-step norm drift
    right_mass = run.packet.state.norm2 - float(run.record.cum["full"][-1, -1])
    ok = trans_norm <= 1e-6 and sym_gap <= quad_tol * ctx.tol_scale and rel <= 0.05 * ctx.tol_scale
    return CriterionResult(7, "total reflection", ok,
                           {"transmitted_norm": trans_norm, "dynamic_mass_beyond_R": right_mass,
                            "max_tau_in_minus_out": sym_gap,
                            "plateau": plat.value, "tau_ew": ew, "rel_err": rel})


def criterion_8(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("bump")
    tau_sym = timedelay.local_time_delays(run.curve)[2]
    plat = timedelay.plateau(run.r_values, tau_sym)
    r = float(run.r_values[-1])
    tau_l, tau_r = timedelay.lr_decomposition(run.packet, run.data, record=run.record, r=r)
    bars = error_budget(run, plat.spread) * ctx.tol_scale
    diff = abs(tau_l + tau_r - plat.value)
    return CriterionResult(8, "left/right decomposition", diff <= bars,
                           {"tau_l": tau_l, "tau_r": tau_r, "sum": tau_l + tau_r,
                            "plateau": plat.value, "abs_diff": diff, "error_bars": bars})


def criterion_9(ctx: Context) -> CriterionResult:
    run = ctx.delay_run("bump")
    dyn = timedelay.translated_sym_delay(run.record, run.r_values, SHIFT)
    plat = timedelay.plateau(run.r_values, dyn)
    formula = timedelay.translated_delay(run.spec, run.data, SHIFT)
    rel = abs(plat.value - formula) / abs(formula)
    return CriterionResult(9, "translated interval", rel <= 0.05 * ctx.tol_scale,
                           {"x0": SHIFT, "dynamic": plat.value, "formula": formula,
                            "rel_err": rel})


def propagation_exponents(n: int = 2 ** 15, dx: float = 0.1):
    """Log-log decay exponents of the left-tail mass and of the weighted norm."""
    packet = spectral.canonical_packet([BUMP_WINDOW], 0.0, 1.0,
                                       grid=spectral.uniform_grid(n, dx))
    vmin, vmax = dynamics.packet_velocities(packet)
    # the core has left the origin region, and the front has not wrapped
    t_lo = 8.0 * packet.spread / vmin
    t_hi = 0.6 * (0.5 * n * dx) / vmax
    times = np.geomspace(t_lo, t_hi, 24)
    left = dynamics.left_tail_mass(packet.state, times)
    weighted = dynamics.weighted_mass(packet.state, times, mu=2.0)
    # discard samples at the round-off floor
    keep = left > 1e-12 * packet.state.norm2
    exp_a = dynamics.decay_exponent(times[keep], left[keep])
    exp_c = dynamics.decay_exponent(times, weighted)
    return exp_a, exp_c, (t_lo, t_hi)


def criterion_10(ctx: Context) -> CriterionResult:
    exp_a, exp_c, (t_lo, t_hi) = propagation_exponents()
    return CriterionResult(10, "propagation estimates", exp_a >= 4.0 and exp_c >= 3.9,
                           {"left_tail_exponent": exp_a, "weighted_exponent": exp_c,
                            "t_lo": t_lo, "t_hi": t_hi})


CANONICAL_POTENTIALS = {
    "pure-step": lambda: make_pure_step(0.0, 1.0),
    "smooth-step": lambda: make_smooth_step(0.0, 1.0, 1.0),
    "step-plus-bump": lambda: make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0),
}
CANONICAL_WINDOWS = ([REFLECTION_WINDOW], [BUMP_WINDOW], [REFLECTION_WINDOW, BUMP_WINDOW])


def time_reversal_defect(data: stationary.ScatteringData) -> float:
    """Max entrywise gap between ``S`` and its transpose in channel order."""
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    worst = 0.0
    for sp in data.s:
        m = sp.matrix
        if m.shape == (2, 2):
            worst = max(worst, float(np.abs(m - swap @ m.T @ swap).max()))
    return worst


def reversal_defect(phi: spectral.SpatialState, data: stationary.ScatteringData) -> float:
    """``|| S Theta S phi - Theta phi ||``, the packet form of ``Theta S Theta = S*``."""
    back = spectral.scatter_state(spectral.time_reverse(spectral.scatter_state(phi, data)), data)
    ref = spectral.time_reverse(phi)
    return math.sqrt(float(np.sum(np.abs(back.values - ref.values) ** 2)) * phi.dx)


def criterion_11(ctx: Context) -> CriterionResult:
    worst_norm = worst_tr = worst_packet = 0.0
    for make in CANONICAL_POTENTIALS.values():
        pot = make()
        for wins in CANONICAL_WINDOWS:
            packet = spectral.canonical_packet(wins, pot.v_left, pot.v_right,
                                               grid=spectral.uniform_grid(8192, 0.2))
            # the wider margin covers the support of the time-reversed outgoing state
            data = stationary.scattering_sweep(pot, packet.sweep_energies(64, margin=0.08),
                                               with_t=False)
            spec = packet.in_representation()
            n_ll, n_rl = timedelay.channel_norms(spec, data)
            worst_norm = max(worst_norm, abs(n_ll + n_rl - spec.norm2))
            worst_tr = max(worst_tr, time_reversal_defect(data))
            worst_packet = max(worst_packet, reversal_defect(packet.state, data))
    tol = 1e-6 * ctx.tol_scale
    return CriterionResult(11, "channel-identity bookkeeping",
                           max(worst_norm, worst_tr, worst_packet) <= tol,
                           {"norm_defect": worst_norm, "time_reversal_defect": worst_tr,
                            "packet_reversal_defect": worst_packet, "tol": tol})


NAMES = {
    1: "S-matrix structure",
    2: "analytic step oracle",
    3: "free sojourn identity",
    4: "central identity",
    5: "divergence structure",
    6: "sigma-surrogate equivalence",
    7: "total reflection",
    8: "left/right decomposition",
    9: "translated interval",
    10: "propagation estimates",
    11: "channel-identity bookkeeping",
}
CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}
DYNAMICAL = {4, 5, 6, 7, 8, 9}


def run_one(number: int, context: Context) -> CriterionResult:
    """One criterion; numerical-certificate failures count as FAIL."""
    try:
        return CRITERIA[number](context)
    except (stationary.CertificateError, stationary.GridError, timedelay.PlateauError) as exc:
        return CriterionResult(number, NAMES[number], False, {"error": str(exc)})


def run_all(quick: bool = False, tol_scale: float = 1.0, report: Optional[Callable] = None,
            context: Optional[Context] = None) -> List[CriterionResult]:
    """Run every criterion (``quick`` skips those needing full-Hamiltonian runs)."""
    ctx = context or Context(tol_scale)
    results = []
    for number in CRITERIA:
        if quick and number in DYNAMICAL:
            res = CriterionResult(number, NAMES[number], True, {"reason": "quick mode"}, skipped=True)
        else:
            res = run_one(number, ctx)
        results.append(res)
        if report is not None:
            report(res.line())
    return results
