"""Batch front end: ``stepdelay run|sweep|verify-all``.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error,
3 numerical-certificate failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import io, spectral, stationary, timedelay, verify
from .config import RunConfig, load_run_config
from .dynamics import Quadrature, plan_horizon, probe_points, record_sojourn
from .potential import ConfigError, PotentialError, parse_document

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CERT, EXIT_IO = 0, 1, 2, 3, 4

CONFIG_ERRORS = (ConfigError, PotentialError, spectral.PacketError,
                 spectral.RepresentationError, stationary.ThresholdError)
CERT_ERRORS = (stationary.CertificateError, stationary.GridError, timedelay.PlateauError)


def _packet(cfg: RunConfig) -> spectral.AdmissiblePacket:
    spec, num, pot = cfg.packet, cfg.numerics, cfg.potential
    grid = spectral.packet_grid(spec.windows, pot.v_left, n=num.n, dx=num.dx)
    if spec.spread is None and spec.center_p is None:
        return spectral.canonical_packet(spec.windows, pot.v_left, pot.v_right,
                                         center_x=spec.center_x, grid=grid, theta=spec.theta)
    if spec.spread is None:
        raise ConfigError("packet.spread is required when packet.center_p is given")
    return spectral.make_admissible_packet(spec.center_x, spec.center_p, spec.spread,
                                           spec.windows, pot.v_left, pot.v_right,
                                           theta=spec.theta, grid=grid)


def _quadrature(cfg: RunConfig, packet) -> Quadrature:
    num, tol = cfg.numerics, cfg.tolerances
    t_max = num.t_max or plan_horizon(packet, float(cfg.radii.max()))
    return Quadrature(t_max, dt=num.dt, sample_dt=num.sample_dt,
                      tail_tol=tol["quadrature_tail"], moller_tol=tol["moller"],
                      leakage_tol=tol["leakage"])


def _data(cfg: RunConfig, energies, with_t=True, workers=1) -> stationary.ScatteringData:
    return stationary.scattering_sweep(cfg.potential, energies, with_t=with_t,
                                       tol=cfg.tolerances["tail"], workers=workers,
                                       derivative_tol=cfg.tolerances["derivative"])


def _plateau(cfg, r, values):
    return timedelay.plateau(r, values, rel=cfg.tolerances["plateau_rel"],
                             floor=cfg.tolerances["plateau_floor"])


def run_experiment(cfg: RunConfig, out: str, workers: int = 1) -> dict:
    """Execute one configured experiment; returns the status block for the manifest."""
    files: List[str] = []
    status: dict = {"experiment": cfg.experiment}
    if cfg.experiment == "sweep":
        data = _data(cfg, cfg.energies, workers=workers)
        files += io.write_scattering(out, data)
        status["max_unitarity_defect"] = float(data.unitarity_defects.max())
        return {"files": files, "status": status}

    packet = _packet(cfg)
    energies = cfg.energies if cfg.energies is not None else \
        packet.sweep_energies(cfg.numerics.energy_points)
    data = _data(cfg, energies, workers=workers)
    files += io.write_scattering(out, data)
    spec = packet.in_representation()
    quad = _quadrature(cfg, packet)
    r = cfg.radii

    if cfg.experiment == "delay":
        report = timedelay.build_report(packet, cfg.potential, data, r, quad)
        files.append(io.write_csv(os.path.join(out, "delay_curves.csv"),
                                  ["R", "tau_in", "tau_out", "tau_sym", "sigma_in", "sigma_out"],
                                  report.curve_rows()))
        files.append(io.write_json(os.path.join(out, "report.json"), json.loads(report.to_json())))
        status.update(tau_ew=report.tau_ew, tau_plateau=report.tau_plateau)
    elif cfg.experiment == "sigma":
        s_in, s_out = timedelay.sigma_surrogates(packet, data, r, quad)
        plat = _plateau(cfg, r, 0.5 * (s_in + s_out))
        files.append(io.write_csv(os.path.join(out, "sigma_curves.csv"),
                                  ["R", "sigma_in", "sigma_out"], np.column_stack([r, s_in, s_out])))
        status.update(tau_ew=timedelay.ew_expectation(spec, data), sigma_plateau=plat.value,
                      sigma_plateau_spread=plat.spread)
    elif cfg.experiment == "decompose":
        tau_l, tau_r = timedelay.lr_decomposition(packet, data, quad, r=float(r[-1]),
                                                  potential=cfg.potential)
        files.append(io.write_csv(os.path.join(out, "decomposition.csv"),
                                  ["R", "tau_l", "tau_r", "sum"],
                                  [[r[-1], tau_l, tau_r, tau_l + tau_r]]))
        status.update(tau_l=tau_l, tau_r=tau_r, tau_ew=timedelay.ew_expectation(spec, data))
    elif cfg.experiment == "translate":
        rec = record_sojourn(packet.state, cfg.potential, data, probe_points(r, (cfg.x0,)), quad)
        dyn = timedelay.translated_sym_delay(rec, r, cfg.x0)
        plat = _plateau(cfg, r, dyn)
        formula = timedelay.translated_delay(spec, data, cfg.x0)
        files.append(io.write_csv(os.path.join(out, "translated.csv"),
                                  ["R", "tau_sym_translated"], np.column_stack([r, dyn])))
        status.update(x0=cfg.x0, dynamic_plateau=plat.value, formula=formula)
    return {"files": files, "status": status}


def _resolved(cfg: RunConfig) -> dict:
    raw = dict(cfg.raw)
    raw["tolerances"] = dict(cfg.tolerances)
    if cfg.radii is not None:
        raw["radii"] = list(map(float, cfg.radii))
    if cfg.energies is not None:
        raw["energies"] = list(map(float, cfg.energies))
    return raw


def _load(path: str, tol_scale: float, force: Optional[str] = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        doc = parse_document(fh.read())
    if force is not None:
        doc["experiment"] = force
    cfg = load_run_config(doc)
    return cfg.scaled(tol_scale) if tol_scale != 1.0 else cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stepdelay", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="parallel energy workers")
        p.add_argument("--seed", type=int, default=0,
                       help="reserved; nothing in the computation is random")
        p.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiply every tolerance by this factor")

    for verb in ("run", "sweep"):
        p = sub.add_parser(verb, help=f"{verb} a JSON/TOML config")
        p.add_argument("config")
        common(p)
    p = sub.add_parser("verify-all", help="run the acceptance matrix")
    p.add_argument("--quick", action="store_true", help="skip full-Hamiltonian runs")
    common(p)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if not args.tol_scale > 0:
        print("error: --tol-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verb == "verify-all":
            return _verify(args)
        cfg = _load(args.config, args.tol_scale, "sweep" if args.verb == "sweep" else None)
        if cfg.experiment == "verify-all":
            return _verify(args)
        out = args.out or cfg.output or "stepdelay-out"
        os.makedirs(out, exist_ok=True)
        result = run_experiment(cfg, out, workers=args.threads)
        io.write_manifest(out, result["files"], _resolved(cfg), result["status"])
        for k, v in result["status"].items():
            print(f"{k}: {v}")
        return EXIT_OK
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CERT_ERRORS as exc:
        name = getattr(exc, "certificate", type(exc).__name__)
        print(f"certificate failed [{name}]: {exc}", file=sys.stderr)
        return EXIT_CERT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def _verify(args) -> int:
    results = verify.run_all(quick=getattr(args, "quick", False), tol_scale=args.tol_scale,
                             report=lambda line: print(line, flush=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = io.write_json(os.path.join(args.out, "acceptance.json"),
                             [{"criterion": r.number, "name": r.name, "passed": bool(r.passed),
                               "skipped": r.skipped, "details": r.details} for r in results])
        io.write_manifest(args.out, [path], {"experiment": "verify-all",
                                             "tol_scale": args.tol_scale},
                          {"passed": all(r.passed for r in results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
