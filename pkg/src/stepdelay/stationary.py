"""Jost solutions, the scattering matrix and the Eisenbud-Wigner matrix.

Conventions (hbar = 1, m = 1/2):

* ``f_r(x) ~ exp(i k_r x)`` as x -> +inf and ``f_l(x) ~ exp(-i k_l x)`` as
  x -> -inf, with ``k = sqrt(E - V)`` on the principal branch, so ``k_r`` is
  positive imaginary below the right threshold.
* ``W(f, g) = f g' - g f'``.
* The S-matrix is stored in the layout ``[[s_rl, s_rr], [s_ll, s_lr]]``: rows
  are outgoing channels (r, l), columns are incoming channels (l, r).  A
  constant potential gives ``s_rl = s_lr = 1`` and zero reflection.
* ``T(E) = -i S(E)^* dS/dE`` in the same column ordering, so ``T[0, 0]`` is
  ``t_ll`` and ``T[1, 1]`` is ``t_rr``.
"""
from __future__ import annotations

import cmath
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .potential import Potential

ODE_RTOL = 1e-12
ODE_ATOL = 1e-300
TAIL_TOL = 1e-8
WRONSKIAN_RTOL = 1e-8
WRONSKIAN_ATOL = 1e-12
DEGENERACY_FLOOR = 1e-10
DEFAULT_DX = 0.05
MIN_CUTOFF = 5.0


class ThresholdError(ValueError):
    """Energy too close to a channel threshold (or below the left one)."""


class GridError(ValueError):
    """The spatial grid does not reach far enough into the asymptotic region."""


class CertificateError(RuntimeError):
    """A numerical quality certificate failed."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.certificate = name


class AbsentEntryError(LookupError):
    """The requested S or T entry does not exist in the one-channel regime."""


# -- thresholds -------------------------------------------------------------

def exclusion_radius(potential: Potential, radius: Optional[float] = None) -> float:
    """Default threshold exclusion: 5% of the step height, or 0.05 without a step."""
    if radius is not None:
        return float(radius)
    gap = potential.v_right - potential.v_left
    return 0.05 * gap if gap > 0 else 0.05


def regime_of(potential: Potential, energy: float) -> str:
    return "two-channel" if energy > potential.v_right else "one-channel"


def check_energy(potential: Potential, energy: float, radius: Optional[float] = None) -> None:
    rad = exclusion_radius(potential, radius)
    if not math.isfinite(energy) or energy <= potential.v_left:
        raise ThresholdError(f"E={energy} is not above the left threshold {potential.v_left}")
    for v in (potential.v_left, potential.v_right):
        if abs(energy - v) < rad * (1.0 - 1e-9):
            raise ThresholdError(f"E={energy} lies within {rad:g} of the threshold {v}")


def wavenumber(energy: float, v: float) -> complex:
    """Principal-branch ``sqrt(E - V)``; positive imaginary below threshold."""
    return cmath.sqrt(complex(energy - v, 0.0))


# -- spatial grids ----------------------------------------------------------

@dataclass(frozen=True)
class SpatialGrid:
    """Integration window ``[x_min, x_max]`` with nominal spacing ``dx``."""

    x_min: float
    x_max: float
    dx: float = DEFAULT_DX

    def __post_init__(self):
        if not (self.x_max > 0.0 > self.x_min):
            raise GridError("the grid must contain the origin in its interior")
        if not self.dx > 0:
            raise GridError("dx must be positive")

    def nodes(self, potential: Optional[Potential] = None) -> np.ndarray:
        n = max(2, int(math.ceil((self.x_max - self.x_min) / self.dx)) + 1)
        xs = np.linspace(self.x_min, self.x_max, n)
        extra = [0.0]
        if potential is not None:
            extra += [b for b in potential.breakpoints if self.x_min < b < self.x_max]
        xs = np.union1d(xs, np.asarray(extra, dtype=np.float64))
        # drop nodes that nearly duplicate an inserted breakpoint
        keep = np.concatenate([[True], np.diff(xs) > 1e-9 * self.dx])
        return xs[keep]


@functools.lru_cache(maxsize=4096)
def _tail(potential: Potential, x_cut: float, side: str) -> float:
    return potential.tail_integral(x_cut, side)


def grid_tail_error(potential: Potential, grid: SpatialGrid, energy: float) -> float:
    """Volterra tail bound ``int |V - V_asym| / |k|`` beyond both cutoffs."""
    kl = abs(wavenumber(energy, potential.v_left))
    kr = abs(wavenumber(energy, potential.v_right))
    return max(_tail(potential, grid.x_max, "right") / kr,
               _tail(potential, grid.x_min, "left") / kl)


def auto_grid(potential: Potential, energy: float, tol: float = TAIL_TOL,
              dx: float = DEFAULT_DX) -> SpatialGrid:
    """Symmetric grid whose cutoffs make the asymptotic boundary data accurate to ``tol``."""
    kl = abs(wavenumber(energy, potential.v_left))
    kr = abs(wavenumber(energy, potential.v_right))
    extent = []
    for side, k in (("left", kl), ("right", kr)):
        x = MIN_CUTOFF
        while _tail(potential, -x if side == "left" else x, side) / k > tol:
            x *= 1.25
            if x > 1e6:
                raise GridError("potential tail decays too slowly for an automatic cutoff")
        extent.append(x)
    if potential.kind == "custom":
        lo, hi = potential.breakpoints[0], potential.breakpoints[-1]
        extent[0] = max(extent[0], -lo + 1.0)
        extent[1] = max(extent[1], hi + 1.0)
    return SpatialGrid(-extent[0], extent[1], dx)


def sweep_grid(potential: Potential, energies: Sequence[float], tol: float = TAIL_TOL,
               dx: float = DEFAULT_DX) -> SpatialGrid:
    """One grid valid for every energy of a sweep (sized at the smallest wavenumbers)."""
    grids = [auto_grid(potential, float(e), tol, dx) for e in (min(energies), max(energies))]
    near = [e for e in energies if e > potential.v_right]
    if near:
        grids.append(auto_grid(potential, float(min(near)), tol, dx))
    below = [e for e in energies if e < potential.v_right]
    if below:
        grids.append(auto_grid(potential, float(max(below)), tol, dx))
    return SpatialGrid(min(g.x_min for g in grids), max(g.x_max for g in grids), dx)


# -- Jost solutions ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JostSolution:
    energy: float
    side: str
    k: complex
    x: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    steps: int = 0

    def residual(self, potential: Potential) -> float:
        """Relative discrete residual of ``f'' = (V - E) f`` away from breakpoints."""
        dz = np.gradient(self.derivative, self.x)
        rhs = (potential.profile(self.x) - self.energy) * self.values
        mask = np.ones(self.x.shape, dtype=bool)
        for b in potential.breakpoints:
            mask &= np.abs(self.x - b) > 2.5 * np.max(np.diff(self.x))
        mask[[0, -1]] = False
        scale = np.max(np.abs(self.values)) * max(1.0, abs(self.k) ** 2)
        return float(np.max(np.abs(dz - rhs)[mask]) / scale)


def _check_grid(potential, energy, grid, tol):
    err = grid_tail_error(potential, grid, energy)
    if err > tol:
        raise GridError(f"grid too short: tail estimate {err:.3g} exceeds {tol:g}")


def jost_right(potential: Potential, energy: float, grid: Optional[SpatialGrid] = None,
               radius: Optional[float] = None, tol: float = TAIL_TOL,
               rtol: float = ODE_RTOL) -> JostSolution:
    """Right Jost solution, integrated leftwards from ``grid.x_max``."""
    check_energy(potential, energy, radius)
    grid = grid or auto_grid(potential, energy, tol)
    _check_grid(potential, energy, grid, tol)
    xs = grid.nodes(potential)
    k = wavenumber(energy, potential.v_right)
    y0 = cmath.exp(1j * k * xs[-1])
    code, params, breaks, coefs = potential.encoded()
    ys, zs, n = kernels.integrate_jost(xs, xs.shape[0] - 1, y0, 1j * k * y0, float(energy),
                                       code, params, breaks, coefs, rtol, ODE_ATOL)
    return JostSolution(float(energy), "right", k, xs, ys, zs, int(n))


def jost_left(potential: Potential, energy: float, grid: Optional[SpatialGrid] = None,
              radius: Optional[float] = None, tol: float = TAIL_TOL,
              rtol: float = ODE_RTOL) -> JostSolution:
    """Left Jost solution, integrated rightwards from ``grid.x_min``."""
    check_energy(potential, energy, radius)
    grid = grid or auto_grid(potential, energy, tol)
    _check_grid(potential, energy, grid, tol)
    xs = grid.nodes(potential)
    k = wavenumber(energy, potential.v_left)
    y0 = cmath.exp(-1j * k * xs[0])
    code, params, breaks, coefs = potential.encoded()
    ys, zs, n = kernels.integrate_jost(xs, 0, y0, -1j * k * y0, float(energy),
                                       code, params, breaks, coefs, rtol, ODE_ATOL)
    return JostSolution(float(energy), "left", k, xs, ys, zs, int(n))


def _wronskian_arrays(fv, fd, gv, gd):
    return fv * gd - gv * fd


def _complex_median(w):
    return complex(np.median(w.real), np.median(w.imag))


def _check_pair(f: JostSolution, g: JostSolution):
    if f.energy != g.energy:
        raise ValueError("Wronskian of solutions at different energies")
    if f.x.shape != g.x.shape or not np.array_equal(f.x, g.x):
        raise ValueError("Wronskian of solutions on different grids")


def wronskian_profile(f: JostSolution, g: JostSolution) -> np.ndarray:
    _check_pair(f, g)
    return _wronskian_arrays(f.values, f.derivative, g.values, g.derivative)


def wronskian(f: JostSolution, g: JostSolution, audit: bool = False):
    """Median over the grid of ``f g' - g f'``.

    With ``audit=True`` returns ``(W, max |W(x) - W|)``.
    """
    w = wronskian_profile(f, g)
    med = _complex_median(w)
    if audit:
        return med, float(np.max(np.abs(w - med)))
    return med


# -- S-matrix ---------------------------------------------------------------

class SMatrixPoint:
    """S-matrix at one energy; off-channel entries are absent below ``V_r``."""

    __slots__ = ("energy", "regime", "_s", "wronskian", "wronskian_deviation")

    def __init__(self, energy, regime, s_ll, s_rl=None, s_rr=None, s_lr=None,
                 wronskian=0j, wronskian_deviation=0.0):
        self.energy = float(energy)
        self.regime = regime
        self._s = {"ll": complex(s_ll),
                   "rl": None if s_rl is None else complex(s_rl),
                   "rr": None if s_rr is None else complex(s_rr),
                   "lr": None if s_lr is None else complex(s_lr)}
        self.wronskian = complex(wronskian)
        self.wronskian_deviation = float(wronskian_deviation)

    def _get(self, key):
        val = self._s[key]
        if val is None:
            raise AbsentEntryError(f"s_{key} does not exist in the {self.regime} regime "
                                   f"(E={self.energy})")
        return val

    s_ll = property(lambda self: self._s["ll"])
    s_rl = property(lambda self: self._get("rl"))
    s_rr = property(lambda self: self._get("rr"))
    s_lr = property(lambda self: self._get("lr"))

    def has(self, key: str) -> bool:
        return self._s[key] is not None

    @property
    def matrix(self) -> np.ndarray:
        if self.regime == "one-channel":
            return np.array([[self.s_ll]], dtype=np.complex128)
        return np.array([[self.s_rl, self.s_rr], [self.s_ll, self.s_lr]], dtype=np.complex128)

    @property
    def unitarity_defect(self) -> float:
        m = self.matrix
        return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])))

    def __repr__(self):
        ents = ", ".join(f"s_{k}={v:.10g}" for k, v in self._s.items() if v is not None)
        return f"SMatrixPoint(E={self.energy:g}, {self.regime}, {ents})"


def s_matrix_at(potential: Potential, energy: float, grid: Optional[SpatialGrid] = None,
                radius: Optional[float] = None, tol: float = TAIL_TOL,
                rtol: float = ODE_RTOL, audit: bool = True) -> SMatrixPoint:
    """S-matrix from the Wronskians of the two Jost solutions."""
    check_energy(potential, energy, radius)
    grid = grid or auto_grid(potential, energy, tol)
    fl = jost_left(potential, energy, grid, radius, tol, rtol)
    fr = jost_right(potential, energy, grid, radius, tol, rtol)
    prof = _wronskian_arrays(fl.values, fl.derivative, fr.values, fr.derivative)
    w = _complex_median(prof)
    dev = float(np.max(np.abs(prof - w)))
    scale = abs(fl.k) + abs(fr.k)
    if abs(w) < DEGENERACY_FLOOR * scale:
        raise CertificateError("wronskian-degeneracy", f"|W|={abs(w):.3g} at E={energy}")
    if audit and dev > WRONSKIAN_RTOL * abs(w) + WRONSKIAN_ATOL:
        raise CertificateError("wronskian-constancy",
                               f"deviation {dev:.3g} for |W|={abs(w):.3g} at E={energy}")
    w_conj_l = _complex_median(_wronskian_arrays(fl.values.conj(), fl.derivative.conj(),
                                                 fr.values, fr.derivative))
    s_ll = -w_conj_l / w
    if regime_of(potential, energy) == "one-channel":
        return SMatrixPoint(energy, "one-channel", s_ll, wronskian=w, wronskian_deviation=dev)
    kl, kr = fl.k.real, fr.k.real
    s_rl = 2j * math.sqrt(kl * kr) / w
    w_conj_r = _complex_median(_wronskian_arrays(fl.values, fl.derivative,
                                                 fr.values.conj(), fr.derivative.conj()))
    s_rr = -w_conj_r / w
    return SMatrixPoint(energy, "two-channel", s_ll, s_rl, s_rr, s_rl,
                        wronskian=w, wronskian_deviation=dev)


# -- Eisenbud-Wigner matrix -------------------------------------------------

@dataclass(frozen=True)
class EWMatrixPoint:
    energy: float
    t_ll: complex
    t_lr: Optional[complex] = None
    t_rl: Optional[complex] = None
    t_rr: Optional[complex] = None
    scheme: str = "richardson"
    step: float = 0.0
    derivative_error: float = 0.0

    @property
    def regime(self) -> str:
        return "one-channel" if self.t_rr is None else "two-channel"

    @property
    def matrix(self) -> np.ndarray:
        if self.t_rr is None:
            return np.array([[self.t_ll]], dtype=np.complex128)
        return np.array([[self.t_ll, self.t_lr], [self.t_rl, self.t_rr]], dtype=np.complex128)

    def entry(self, key: str) -> complex:
        val = getattr(self, "t_" + key)
        if val is None:
            raise AbsentEntryError(f"t_{key} does not exist in the one-channel regime")
        return val

    @property
    def hermiticity_defect(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m - m.conj().T)))


SCHEMES = ("central", "richardson")
DERIVATIVE_TOL = 1e-6


def _derivative(s_of_e, energy, step, scheme):
    if scheme == "central":
        return (s_of_e(energy + step) - s_of_e(energy - step)) / (2.0 * step)
    d1 = s_of_e(energy + step) - s_of_e(energy - step)
    d2 = s_of_e(energy + 2 * step) - s_of_e(energy - 2 * step)
    return (8.0 * d1 - d2) / (12.0 * step)


def default_step(potential: Potential, energy: float, radius: Optional[float] = None,
                 base: float = 2e-3) -> float:
    """Stencil width kept well inside the threshold-free neighbourhood of ``energy``."""
    # S behaves like sqrt(E - V) near a threshold, so the stencil must shrink
    # in proportion to the distance from it
    dist = min(abs(energy - potential.v_left), abs(energy - potential.v_right))
    return min(base, dist / 40.0)


def ew_matrix(s_of_e: Callable[[float], np.ndarray], energy: float, scheme: str = "richardson",
              step: float = 1e-3, thresholds: Sequence[float] = (), tol: float = DERIVATIVE_TOL,
              check: bool = True) -> EWMatrixPoint:
    """``T = -i S^* dS/dE`` with a finite-difference derivative of ``s_of_e``.

    ``s_of_e`` returns the S-matrix in the layout of :attr:`SMatrixPoint.matrix`.
    The derivative is recomputed with half the stencil width; a disagreement
    above ``tol`` raises :class:`CertificateError`.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown derivative scheme {scheme!r}")
    reach = step * (2 if scheme == "richardson" else 1)
    for v in thresholds:
        if (energy - reach - v) * (energy + reach - v) <= 0.0:
            raise ThresholdError(f"stencil around E={energy} crosses the threshold {v}")
    s0 = np.atleast_2d(s_of_e(energy))
    ds = _derivative(s_of_e, energy, step, scheme)
    err = 0.0
    if check:
        ds_half = _derivative(s_of_e, energy, step / 2.0, scheme)
        err = float(np.max(np.abs(ds - ds_half)))
        if err > tol * max(1.0, float(np.max(np.abs(ds)))):
            raise CertificateError("derivative-convergence",
                                   f"stencils h and h/2 differ by {err:.3g} at E={energy}")
        ds = ds_half
    t = -1j * s0.conj().T @ ds
    if t.shape == (1, 1):
        return EWMatrixPoint(float(energy), complex(t[0, 0]), scheme=scheme, step=step,
                             derivative_error=err)
    return EWMatrixPoint(float(energy), complex(t[0, 0]), complex(t[0, 1]), complex(t[1, 0]),
                         complex(t[1, 1]), scheme=scheme, step=step, derivative_error=err)


def s_function(potential: Potential, grid: SpatialGrid, radius: Optional[float] = None,
               tol: float = TAIL_TOL, rtol: float = ODE_RTOL):
    """``E -> S(E)`` matrix evaluator with a fixed grid, for derivative stencils."""
    def s_of_e(e):
        # stencil points may sit slightly inside the exclusion zone; only the
        # centre point is required to respect it
        return s_matrix_at(potential, e, grid, radius=0.0, tol=tol, rtol=rtol,
                           audit=False).matrix
    return s_of_e


def ew_matrix_at(potential: Potential, energy: float, grid: Optional[SpatialGrid] = None,
                 scheme: str = "richardson", radius: Optional[float] = None,
                 step: Optional[float] = None, tol: float = DERIVATIVE_TOL) -> EWMatrixPoint:
    check_energy(potential, energy, radius)
    grid = grid or auto_grid(potential, energy)
    step = step or default_step(potential, energy, radius)
    return ew_matrix(s_function(potential, grid, radius), energy, scheme, step,
                     (potential.v_left, potential.v_right), tol)


# -- sweeps -----------------------------------------------------------------

@dataclass(eq=False)
class ScatteringData:
    energies: np.ndarray
    s: list
    t: list
    potential_id: str
    v_left: float
    v_right: float
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=np.float64)
        if self.energies.ndim != 1 or np.any(np.diff(self.energies) <= 0):
            raise ValueError("energies must be strictly increasing")

    def __len__(self):
        return self.energies.shape[0]

    def entry_array(self, key: str) -> np.ndarray:
        """S entry ``key`` (``'ll'``, ``'rl'``, ...) as an array; NaN where absent."""
        return np.array([p._s[key] if p._s[key] is not None else np.nan for p in self.s],
                        dtype=np.complex128)

    def t_array(self, key: str) -> np.ndarray:
        out = []
        for p in self.t:
            v = None if p is None else getattr(p, "t_" + key)
            out.append(np.nan if v is None else v)
        return np.array(out, dtype=np.complex128)

    @property
    def unitarity_defects(self) -> np.ndarray:
        return np.array([p.unitarity_defect for p in self.s])

    @property
    def wronskian_deviations(self) -> np.ndarray:
        return np.array([p.wronskian_deviation / max(abs(p.wronskian), 1e-300) for p in self.s])

    def interpolator(self, key: str, kind: str = "s"):
        """Cubic spline of an S (``kind='s'``) or T entry; evaluates per regime.

        Splines never bridge the right threshold.  Outside the sampled range of
        a regime the evaluator raises :class:`ThresholdError`.
        """
        vals = self.entry_array(key) if kind == "s" else self.t_array(key)
        pieces = []
        for sel in (self.energies < self.v_right, self.energies > self.v_right):
            e = self.energies[sel]
            v = vals[sel]
            if e.size >= 4 and np.all(np.isfinite(v)):
                pieces.append((e[0], e[-1], CubicSpline(e, v.real), CubicSpline(e, v.imag)))
            elif e.size and np.all(np.isfinite(v)):
                pieces.append((e[0], e[-1], None, None))

        def evaluate(energy):
            energy = np.asarray(energy, dtype=np.float64)
            out = np.full(energy.shape, np.nan + 0j)
            done = np.zeros(energy.shape, dtype=bool)
            for lo, hi, sr, si in pieces:
                m = (energy >= lo) & (energy <= hi)
                if np.any(m) and sr is None:
                    raise ThresholdError("too few sweep points to interpolate")
                if np.any(m):
                    out[m] = sr(energy[m]) + 1j * si(energy[m])
                    done |= m
            if not np.all(done):
                raise ThresholdError("energy outside the sampled scattering data")
            return out
        return evaluate

    def covers(self, lo: float, hi: float) -> bool:
        return bool(self.energies[0] <= lo and hi <= self.energies[-1])


def scattering_sweep(potential: Potential, energies, grid: Optional[SpatialGrid] = None,
                     scheme: str = "richardson", radius: Optional[float] = None,
                     with_t: bool = True, tol: float = TAIL_TOL, workers: int = 1,
                     derivative_tol: float = DERIVATIVE_TOL) -> ScatteringData:
    """S (and optionally T) at every energy; errors carry the energy index."""
    energies = np.asarray(energies, dtype=np.float64)
    for i, e in enumerate(energies):
        try:
            check_energy(potential, float(e), radius)
        except ThresholdError as exc:
            raise ThresholdError(f"energy index {i}: {exc}") from None
    grid = grid or sweep_grid(potential, energies, tol)
    s_of_e = s_function(potential, grid, radius, tol)

    def task(item):
        i, e = item
        try:
            sp = s_matrix_at(potential, float(e), grid, radius, tol)
            tp = None
            if with_t:
                tp = ew_matrix(s_of_e, float(e), scheme, default_step(potential, float(e), radius),
                               (potential.v_left, potential.v_right), derivative_tol)
            return sp, tp
        except CertificateError as exc:
            raise CertificateError(exc.certificate, f"energy index {i}: {exc}") from None
        except (ThresholdError, GridError) as exc:
            raise type(exc)(f"energy index {i}: {exc}") from None

    items = list(enumerate(energies))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(task, items))
    else:
        results = [task(it) for it in items]
    tols = {"tail": tol, "ode_rtol": ODE_RTOL, "wronskian_rtol": WRONSKIAN_RTOL,
            "derivative": derivative_tol, "exclusion_radius": exclusion_radius(potential, radius),
            "grid": [grid.x_min, grid.x_max, grid.dx], "scheme": scheme}
    return ScatteringData(energies, [r[0] for r in results], [r[1] for r in results],
                          potential.ident, potential.v_left, potential.v_right, tols)
