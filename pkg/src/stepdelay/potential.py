"""Steplike potentials: the model type, canonical families and config I/O.

Units follow hbar = 1, m = 1/2, so ``H = -d^2/dx^2 + V`` and ``E = p^2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import kernels

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("pure-step", "smooth-step", "step-plus-bump", "custom")
_KIND_CODES = {
    "pure-step": kernels.PURE_STEP,
    "smooth-step": kernels.SMOOTH_STEP,
    "step-plus-bump": kernels.STEP_BUMP,
    "custom": kernels.CUSTOM,
}
DEFAULT_DECLARED_MU = 8.0


class PotentialError(ValueError):
    """Invalid potential parameters."""


class ConfigError(ValueError):
    """A configuration document does not match its schema."""


@dataclass(frozen=True)
class ChannelConstants:
    kappa: float
    side: str

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise PotentialError(f"side must be 'left' or 'right', got {self.side!r}")


@dataclass(frozen=True, eq=False)
class Potential:
    """A real, bounded potential with limits ``v_left`` (x -> -inf) and ``v_right``."""

    v_left: float
    v_right: float
    kind: str
    decay_mu: float
    decay_M: float
    params: dict = field(default_factory=dict)
    pieces: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if not (math.isfinite(self.v_left) and math.isfinite(self.v_right)):
            raise PotentialError("asymptotic values must be finite")
        if self.v_left > self.v_right:
            raise PotentialError(
                f"v_left={self.v_left} > v_right={self.v_right}; mirror x -> -x first")
        if not self.decay_mu > 0 or not self.decay_M > 0:
            raise PotentialError("decay_mu and decay_M must be positive")

    # -- evaluation -------------------------------------------------------
    def encoded(self):
        """Arguments describing this potential to the compiled kernels."""
        p = self.params
        arr = np.array([self.v_left, self.v_right, p.get("width", 1.0), p.get("bump_height", 0.0),
                        p.get("bump_center", 0.0), p.get("bump_width", 1.0)], dtype=np.float64)
        if self.kind == "custom":
            breaks = np.array([pc[0] for pc in self.pieces] + [self.pieces[-1][1]], dtype=np.float64)
            deg = max(len(pc[2]) for pc in self.pieces)
            coefs = np.zeros((len(self.pieces), deg), dtype=np.float64)
            for i, pc in enumerate(self.pieces):
                coefs[i, :len(pc[2])] = pc[2]
        else:
            breaks = np.zeros(1, dtype=np.float64)
            coefs = np.zeros((1, 1), dtype=np.float64)
        return _KIND_CODES[self.kind], arr, breaks, coefs

    def profile(self, x):
        """Vectorised ``V(x)``."""
        x = np.asarray(x, dtype=np.float64)
        vl, vr = self.v_left, self.v_right
        if self.kind == "pure-step":
            return np.where(x < 0.0, vl, vr)
        if self.kind in ("smooth-step", "step-plus-bump"):
            w = self.params["width"]
            v = vl + (vr - vl) * 0.5 * (1.0 + np.tanh(x / w))
            if self.kind == "step-plus-bump":
                u = (x - self.params["bump_center"]) / self.params["bump_width"]
                v = v + self.params["bump_height"] * np.exp(-u * u)
            return v
        code, arr, breaks, coefs = self.encoded()
        flat = np.ravel(x)
        out = np.array([kernels.potential_value(float(xi), code, arr, breaks, coefs) for xi in flat])
        return out.reshape(x.shape)

    def __call__(self, x):
        return self.profile(x)

    @property
    def breakpoints(self):
        """Points where the profile may be discontinuous or non-smooth."""
        if self.kind == "pure-step":
            return (0.0,)
        if self.kind == "custom":
            return tuple(pc[0] for pc in self.pieces) + (self.pieces[-1][1],)
        return ()

    @property
    def is_constant(self):
        if self.v_left != self.v_right:
            return False
        if self.kind == "pure-step":
            return True
        if self.kind == "step-plus-bump":
            return self.params["bump_height"] == 0.0
        if self.kind == "custom":
            return all(len(pc[2]) >= 1 and pc[2][0] == self.v_left and not any(pc[2][1:])
                       for pc in self.pieces)
        return True

    def channel(self, side):
        return ChannelConstants(self.v_left if side == "left" else self.v_right, side)

    def deviation(self, x):
        """``|V(x) - V_asym|`` with the asymptote of the side x lies on."""
        x = np.asarray(x, dtype=np.float64)
        asym = np.where(x <= 0.0, self.v_left, self.v_right)
        return np.abs(self.profile(x) - asym)

    def decay_bound(self, x):
        """``M (1 + |x|)^(-mu)``; the pure-step sentinel ``mu = inf`` gives M at 0 only."""
        x = np.asarray(x, dtype=np.float64)
        if math.isinf(self.decay_mu):
            return np.where(x == 0.0, self.decay_M, 0.0)
        return self.decay_M * (1.0 + np.abs(x)) ** (-self.decay_mu)

    def check_decay(self, x=None, rtol=1e-9):
        """True if the declared decay bound holds at every sample point."""
        if x is None:
            x = np.concatenate([np.linspace(-1e3, 1e3, 200001), [0.0]])
        dev = self.deviation(x)
        return bool(np.all(dev <= self.decay_bound(x) * (1.0 + rtol) + 1e-300))

    def tail_integral(self, x_cut, side):
        """``int |V - V_side|`` from ``x_cut`` to the corresponding infinity."""
        if self.kind == "pure-step":
            return 0.0
        ref = self.v_right if side == "right" else self.v_left

        def f(y):
            return abs(float(self.profile(y)) - ref)

        if self.kind == "custom":
            lo, hi = self.pieces[0][0], self.pieces[-1][1]
            if side == "right":
                a = max(x_cut, lo)
                return integrate.quad(f, a, hi, limit=200)[0] if a < hi else 0.0
            b = min(x_cut, hi)
            return integrate.quad(f, lo, b, limit=200)[0] if b > lo else 0.0
        if side == "right":
            return integrate.quad(f, x_cut, np.inf, limit=200)[0]
        return integrate.quad(f, -np.inf, x_cut, limit=200)[0]

    def to_dict(self):
        d = {"kind": self.kind, "v_left": self.v_left, "v_right": self.v_right}
        d.update(self.params)
        if self.kind == "custom":
            d["pieces"] = [{"x0": a, "x1": b, "coeffs": list(c)} for a, b, c in self.pieces]
        d["decay_mu"] = "inf" if math.isinf(self.decay_mu) else self.decay_mu
        d["decay_M"] = self.decay_M
        return d

    def __eq__(self, other):
        if not isinstance(other, Potential):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    @property
    def ident(self):
        """Short provenance string."""
        return json.dumps(self.to_dict(), sort_keys=True)


def _exp_tail_constant(amplitude, rate, mu):
    # max over r >= 0 of amplitude * (1 + r)^mu * exp(-rate * r)
    r_star = mu / rate - 1.0
    if r_star <= 0.0:
        return amplitude
    return amplitude * (1.0 + r_star) ** mu * math.exp(-rate * r_star)


def _sampled_decay_constant(pot_like, mu, extent):
    x = np.linspace(-extent, extent, 400001)
    dev = pot_like.deviation(x)
    ratio = dev * (1.0 + np.abs(x)) ** mu
    return float(ratio.max()) * (1.0 + 1e-6)


def make_pure_step(v_left, v_right):
    """Step from ``v_left`` (x < 0) to ``v_right`` (x >= 0)."""
    v_left, v_right = float(v_left), float(v_right)
    if v_left > v_right:
        raise PotentialError(f"v_left={v_left} > v_right={v_right}")
    jump = v_right - v_left
    return Potential(v_left, v_right, "pure-step", math.inf, jump if jump > 0 else 1.0)


def make_smooth_step(v_left, v_right, width, decay_mu=DEFAULT_DECLARED_MU):
    """``v_left + (v_right - v_left) (1 + tanh(x / width)) / 2``."""
    width = float(width)
    if not width > 0:
        raise PotentialError("width must be positive")
    v_left, v_right = float(v_left), float(v_right)
    if v_left > v_right:
        raise PotentialError(f"v_left={v_left} > v_right={v_right}")
    jump = v_right - v_left
    # |V - V_asym| <= jump * exp(-2|x|/width) on either side
    M = _exp_tail_constant(jump, 2.0 / width, decay_mu) if jump > 0 else 1.0
    return Potential(v_left, v_right, "smooth-step", float(decay_mu), M, {"width": width})


def make_step_plus_bump(v_left, v_right, bump_height, bump_center, bump_width, width=1.0,
                        decay_mu=DEFAULT_DECLARED_MU):
    """Smooth step plus ``bump_height * exp(-((x - bump_center) / bump_width)^2)``."""
    bump_width = float(bump_width)
    if not bump_width > 0:
        raise PotentialError("bump_width must be positive")
    if not float(width) > 0:
        raise PotentialError("width must be positive")
    v_left, v_right = float(v_left), float(v_right)
    if v_left > v_right:
        raise PotentialError(f"v_left={v_left} > v_right={v_right}")
    params = {"width": float(width), "bump_height": float(bump_height),
              "bump_center": float(bump_center), "bump_width": bump_width}
    probe = Potential(v_left, v_right, "step-plus-bump", float(decay_mu), 1.0, params)
    extent = 50.0 * (float(width) + bump_width) + 2.0 * abs(float(bump_center))
    M = _sampled_decay_constant(probe, decay_mu, extent)
    if M <= 0.0:
        M = 1.0
    return Potential(v_left, v_right, "step-plus-bump", float(decay_mu), M, params)


def make_custom(v_left, v_right, pieces, decay_mu, decay_M):
    """Piecewise polynomial on contiguous pieces ``(x0, x1, coeffs)``.

    ``coeffs`` are ascending powers of ``x - x0``.  The potential equals
    ``v_left`` left of the first piece and ``v_right`` right of the last one.
    """
    if not pieces:
        raise PotentialError("custom potential needs at least one piece")
    norm = []
    for pc in pieces:
        x0, x1, coeffs = float(pc[0]), float(pc[1]), tuple(float(c) for c in pc[2])
        if not x1 > x0:
            raise PotentialError(f"empty piece [{x0}, {x1})")
        if not coeffs:
            raise PotentialError("piece without coefficients")
        norm.append((x0, x1, coeffs))
    for (_, b, _), (a, _, _) in zip(norm[:-1], norm[1:]):
        if a != b:
            raise PotentialError("custom pieces must be contiguous")
    return Potential(float(v_left), float(v_right), "custom", float(decay_mu), float(decay_M),
                     {}, tuple(norm))


# -- configuration ---------------------------------------------------------

def parse_document(document):
    """Parse JSON or TOML text into a dict."""
    if isinstance(document, dict):
        return document
    text = document.strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"document is neither JSON nor TOML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a key-value tree")
    return data


def _number(d, key, required=True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = d[key]
    if isinstance(val, str) and val.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"key {key!r} must be a number, got {val!r}")
    return float(val)


_ALLOWED = {
    "pure-step": {"kind", "v_left", "v_right", "decay_mu", "decay_M"},
    "smooth-step": {"kind", "v_left", "v_right", "width", "decay_mu", "decay_M"},
    "step-plus-bump": {"kind", "v_left", "v_right", "width", "bump_height", "bump_center",
                       "bump_width", "decay_mu", "decay_M"},
    "custom": {"kind", "v_left", "v_right", "pieces", "decay_mu", "decay_M"},
}


def potential_from_dict(d):
    kind = d.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {KINDS}, got {kind!r}")
    extra = set(d) - _ALLOWED[kind]
    if extra:
        raise ConfigError(f"unexpected keys for kind {kind!r}: {sorted(extra)}")
    vl = _number(d, "v_left")
    vr = _number(d, "v_right")
    if vl > vr:
        raise ConfigError(f"v_left={vl} > v_right={vr}")
    try:
        if kind == "pure-step":
            pot = make_pure_step(vl, vr)
        elif kind == "smooth-step":
            pot = make_smooth_step(vl, vr, _number(d, "width"),
                                   _number(d, "decay_mu", False, DEFAULT_DECLARED_MU))
        elif kind == "step-plus-bump":
            pot = make_step_plus_bump(vl, vr, _number(d, "bump_height"), _number(d, "bump_center"),
                                      _number(d, "bump_width"), _number(d, "width", False, 1.0),
                                      _number(d, "decay_mu", False, DEFAULT_DECLARED_MU))
        else:
            if "decay_mu" not in d or "decay_M" not in d:
                raise ConfigError("custom potentials must declare decay_mu and decay_M")
            raw = d.get("pieces")
            if not isinstance(raw, list) or not raw:
                raise ConfigError("custom potentials need a non-empty 'pieces' list")
            pieces = []
            for pc in raw:
                if not isinstance(pc, dict) or not {"x0", "x1", "coeffs"} <= set(pc):
                    raise ConfigError("each piece needs x0, x1 and coeffs")
                pieces.append((_number(pc, "x0"), _number(pc, "x1"), [float(c) for c in pc["coeffs"]]))
            return make_custom(vl, vr, pieces, _number(d, "decay_mu"), _number(d, "decay_M"))
    except PotentialError as exc:
        raise ConfigError(str(exc)) from None
    # explicit decay metadata overrides the computed values
    if "decay_M" in d or ("decay_mu" in d and kind == "pure-step"):
        pot = Potential(pot.v_left, pot.v_right, pot.kind, _number(d, "decay_mu", False, pot.decay_mu),
                        _number(d, "decay_M", False, pot.decay_M), pot.params, pot.pieces)
    return pot


def load_potential_config(document):
    """Build a :class:`Potential` from a JSON/TOML document (or an already parsed dict)."""
    data = parse_document(document)
    if "potential" in data and isinstance(data["potential"], dict):
        data = data["potential"]
    return potential_from_dict(data)


def dump_potential_config(pot):
    """Canonical JSON text for a potential."""
    return json.dumps(pot.to_dict(), indent=2, sort_keys=True)
