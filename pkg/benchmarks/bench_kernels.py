"""Compare the numba kernels with the pure-numpy fallback.

The JIT switch is read at import time, so each path runs in its own
subprocess with ``STEPDELAY_NO_JIT`` set or cleared.  The JIT path is warmed
up first so compilation is not counted.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from stepdelay import USING_JIT, kernels
from stepdelay.potential import make_step_plus_bump
from stepdelay.spectral import canonical_packet
from stepdelay.stationary import scattering_sweep

repeat = int(sys.argv[1])
pot = make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0)
energies = np.linspace(1.5, 2.5, 24)
pk = canonical_packet([(1.5, 2.5)], 0.0, 1.0)
momenta = np.linspace(1.2, 1.6, 1024)

def sweep():
    return scattering_sweep(pot, energies, with_t=False)

def transform():
    return kernels.dtft(pk.state.values, pk.state.x_min, pk.state.dx, momenta)

def best(fn):
    fn()  # warm-up (compilation on the JIT path)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out

t_sweep, data = best(sweep)
t_dtft, ft = best(transform)
print(json.dumps({
    "jit": USING_JIT,
    "sweep_seconds": t_sweep,
    "dtft_seconds": t_dtft,
    "s_rl": [[float(z.real), float(z.imag)] for z in data.entry_array("rl")],
    "dtft": [[float(z.real), float(z.imag)] for z in ft[::64]],
}))
"""


def run(no_jit: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("STEPDELAY_NO_JIT", None)
    if no_jit:
        env["STEPDELAY_NO_JIT"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def max_gap(a, b):
    return max(abs(complex(*x) - complex(*y)) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    jit = run(False, args.repeat)
    plain = run(True, args.repeat)
    if not jit["jit"]:
        print("numba unavailable: both runs used the numpy path")
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for key, label in (("sweep_seconds", "Jost sweep (24 energies)"),
                       ("dtft_seconds", "off-grid DTFT (1024 p)")):
        print(f"{label:<28}{jit[key]:>12.4f}{plain[key]:>12.4f}{plain[key] / jit[key]:>9.1f}x")
    print(f"max |S_rl| difference between paths: {max_gap(jit['s_rl'], plain['s_rl']):.2e}")
    print(f"max DTFT difference between paths:   {max_gap(jit['dtft'], plain['dtft']):.2e}")
    print(f"(wall time {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
