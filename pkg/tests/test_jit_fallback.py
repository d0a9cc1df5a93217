import json
import os
import subprocess
import sys

import numpy as np

from stepdelay.potential import make_step_plus_bump
from stepdelay.stationary import scattering_sweep

SCRIPT = """
import json
import numpy as np
from stepdelay import USING_JIT
from stepdelay.potential import make_step_plus_bump
from stepdelay.stationary import scattering_sweep
data = scattering_sweep(make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0), np.array([0.5, 2.0]))
print(json.dumps({"jit": USING_JIT,
                  "s": [[z.real, z.imag] for z in data.entry_array("ll")],
                  "t": [[z.real, z.imag] for z in data.t_array("ll")]}))
"""


def test_numpy_fallback_matches_compiled_path():
    env = dict(os.environ, STEPDELAY_NO_JIT="1")
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                         text=True, check=True)
    res = json.loads(out.stdout.strip().splitlines()[-1])
    assert res["jit"] is False
    here = scattering_sweep(make_step_plus_bump(0.0, 1.0, 0.3, 0.0, 1.0), np.array([0.5, 2.0]))
    np.testing.assert_allclose([complex(*z) for z in res["s"]], here.entry_array("ll"), atol=1e-12)
    np.testing.assert_allclose([complex(*z) for z in res["t"]], here.t_array("ll"), atol=1e-9)
