"""Run configuration: schema, validation and defaults."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .potential import ConfigError, Potential, parse_document, potential_from_dict

EXPERIMENTS = ("sweep", "delay", "sigma", "decompose", "translate", "verify-all")

DEFAULT_TOLERANCES = {
    "tail": 1e-8,          # Volterra tail bound for the Jost cutoffs
    "derivative": 1e-6,    # dS/dE stencil disagreement
    "quadrature_tail": 1e-3,
    "moller": 1e-2,
    "leakage": 1e-6,
    "plateau_rel": 0.01,
    "plateau_floor": 1e-3,
}

_TOP_KEYS = {"experiment", "potential", "packet", "energies", "numerics", "radii", "x0",
             "output", "tolerances"}


@dataclass(frozen=True)
class PacketSpec:
    windows: tuple
    center_x: float = 0.0
    center_p: Optional[float] = None
    spread: Optional[float] = None
    theta: float = 5.0


@dataclass(frozen=True)
class Numerics:
    n: int = 2 ** 14
    dx: Optional[float] = None
    dt: Optional[float] = None
    sample_dt: float = 0.1
    t_max: Optional[float] = None
    energy_points: int = 128


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    potential: Potential
    packet: Optional[PacketSpec] = None
    energies: Optional[np.ndarray] = None
    numerics: Numerics = field(default_factory=Numerics)
    radii: Optional[np.ndarray] = None
    x0: float = 2.0
    output: Optional[str] = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    raw: dict = field(default_factory=dict)

    def scaled(self, factor: float) -> "RunConfig":
        """Copy with every tolerance multiplied by ``factor``."""
        if not factor > 0:
            raise ConfigError("--tol-scale must be positive")
        tol = {k: v * factor for k, v in self.tolerances.items()}
        return RunConfig(self.experiment, self.potential, self.packet, self.energies,
                         self.numerics, self.radii, self.x0, self.output, tol, self.raw)


def _num(d, key, default=None, positive=False, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key!r} must be a number")
    if integer and int(val) != val:
        raise ConfigError(f"{key!r} must be an integer")
    if positive and not val > 0:
        raise ConfigError(f"{key!r} must be positive")
    return int(val) if integer else float(val)


def _table(d, key):
    val = d.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{key!r} must be a table")
    return val


def _energies(d):
    if isinstance(d, list):
        arr = np.asarray(d, dtype=np.float64)
    else:
        lo, hi = _num(d, "min"), _num(d, "max")
        n = _num(d, "n", positive=True, integer=True)
        if not hi > lo:
            raise ConfigError("energies.max must exceed energies.min")
        arr = np.linspace(lo, hi, n)
    if arr.ndim != 1 or arr.size == 0 or np.any(np.diff(arr) <= 0):
        raise ConfigError("energies must be a non-empty increasing list")
    return arr


def _radii(d):
    if isinstance(d, list):
        arr = np.asarray(d, dtype=np.float64)
    else:
        lo, hi = _num(d, "min", positive=True), _num(d, "max", positive=True)
        n = _num(d, "n", positive=True, integer=True)
        if not hi > lo:
            raise ConfigError("radii.max must exceed radii.min")
        arr = np.geomspace(lo, hi, n)
    if arr.size < 5 or np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
        raise ConfigError("radii must be at least 5 increasing positive values")
    return arr


def load_run_config(document) -> RunConfig:
    """Parse and validate a JSON or TOML run configuration."""
    data = parse_document(document)
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"'experiment' must be one of {EXPERIMENTS}, got {exp!r}")
    pot = None
    if exp != "verify-all":
        if "potential" not in data:
            raise ConfigError("missing 'potential' table")
        pot = potential_from_dict(_table(data, "potential"))
    packet = None
    if "packet" in data:
        pd = _table(data, "packet")
        wins = pd.get("windows")
        if (not isinstance(wins, list) or not wins
                or not all(isinstance(w, list) and len(w) == 2 for w in wins)):
            raise ConfigError("packet.windows must be a list of [E_lo, E_hi] pairs")
        packet = PacketSpec(tuple((float(a), float(b)) for a, b in wins),
                            _num(pd, "center_x", 0.0),
                            float(pd["center_p"]) if "center_p" in pd else None,
                            _num(pd, "spread", positive=True) if "spread" in pd else None,
                            _num(pd, "theta", 5.0, positive=True))
    elif exp in ("delay", "sigma", "decompose", "translate"):
        raise ConfigError(f"experiment {exp!r} needs a 'packet' table")
    energies = None
    if "energies" in data:
        energies = _energies(data["energies"])
    elif exp == "sweep":
        raise ConfigError("experiment 'sweep' needs an 'energies' entry")
    nd = _table(data, "numerics")
    numerics = Numerics(
        _num(nd, "n", 2 ** 14, positive=True, integer=True),
        _num(nd, "dx", positive=True) if "dx" in nd else None,
        _num(nd, "dt", positive=True) if "dt" in nd else None,
        _num(nd, "sample_dt", 0.1, positive=True),
        _num(nd, "t_max", positive=True) if "t_max" in nd else None,
        _num(nd, "energy_points", 128, positive=True, integer=True))
    radii = _radii(data["radii"]) if "radii" in data else None
    if radii is None and exp in ("delay", "sigma", "decompose", "translate"):
        radii = np.geomspace(5.0, 80.0, 16)
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in _table(data, "tolerances").items():
        if k not in tol:
            raise ConfigError(f"unknown tolerance {k!r}")
        tol[k] = _num({k: v}, k, positive=True)
    if any(not (v > 0 and math.isfinite(v)) for v in tol.values()):
        raise ConfigError("tolerances must be positive and finite")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("'output' must be a path string")
    return RunConfig(exp, pot, packet, energies, numerics, radii,
                     _num(data, "x0", 2.0), output, tol, data)
