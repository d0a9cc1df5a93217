"""Deterministic CSV/JSON writers and the run manifest."""
from __future__ import annotations

import hashlib
import json
import os
import time
from typing import Iterable, Sequence

import numpy as np

from .stationary import ScatteringData


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write rows with round-trip float formatting; output depends only on the data."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: str, payload) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


SCATTERING_HEADER = ["E", "regime"] + [f"{part}_s_{k}" for k in ("ll", "rl", "rr", "lr")
                                       for part in ("re", "im")] \
    + [f"{part}_t_{k}" for k in ("ll", "lr", "rl", "rr") for part in ("re", "im")] \
    + ["unitarity_defect", "wronskian_deviation"]


def scattering_rows(data: ScatteringData):
    wdev = data.wronskian_deviations
    for i, (e, sp) in enumerate(zip(data.energies, data.s)):
        tp = data.t[i]
        row = [e, sp.regime]
        for k in ("ll", "rl", "rr", "lr"):
            v = sp._s[k]
            row += [0.0, 0.0] if v is None else [v.real, v.imag]
        for k in ("ll", "lr", "rl", "rr"):
            v = None if tp is None else getattr(tp, "t_" + k)
            row += ["nan", "nan"] if v is None else [v.real, v.imag]
        row += [sp.unitarity_defect, wdev[i]]
        yield row


def write_scattering(directory: str, data: ScatteringData, stem: str = "scattering"):
    csv_path = write_csv(os.path.join(directory, stem + ".csv"), SCATTERING_HEADER,
                         scattering_rows(data))
    json_path = write_json(os.path.join(directory, stem + ".json"), {
        "potential": json.loads(data.potential_id),
        "tolerances": data.tolerances,
        "energies": data.energies,
        "max_unitarity_defect": float(data.unitarity_defects.max()),
        "max_wronskian_deviation": float(data.wronskian_deviations.max()),
    })
    return [csv_path, json_path]


def sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: str, files: Sequence[str], config: dict, status: dict) -> str:
    entries = [{"file": os.path.relpath(f, directory), "sha256": sha256(f)} for f in sorted(files)]
    return write_json(os.path.join(directory, "MANIFEST.json"), {
        "files": entries,
        "config": config,
        "status": status,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    })
