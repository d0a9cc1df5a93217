import csv
import json
import os

import numpy as np
import pytest

from stepdelay import cli


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if isinstance(doc, dict) else doc)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


PURE_STEP_SWEEP = {
    "experiment": "sweep",
    "potential": {"kind": "pure-step", "v_left": 0.0, "v_right": 1.0},
    "energies": [0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 1.1, 1.3, 1.6, 1.9, 2.2, 2.5, 2.8, 3.1, 3.5],
}


def test_sweep_writes_oracle_table_and_manifest(tmp_path):
    cfg = write_config(tmp_path, PURE_STEP_SWEEP)
    out = tmp_path / "out"
    assert cli.main(["sweep", cfg, "--out", str(out)]) == cli.EXIT_OK
    rows = read_csv(out / "scattering.csv")
    assert len(rows) == 15
    for row in rows:
        e = float(row["E"])
        k = np.sqrt(e)
        if e < 1.0:
            expected = 1.0 / (k * np.sqrt(1.0 - e))  # t_ll below the step
        else:
            expected = 0.0
        assert float(row["re_t_ll"]) == pytest.approx(expected, abs=1e-6)
        assert abs(float(row["im_t_ll"])) < 1e-6
    manifest = json.loads((out / "MANIFEST.json").read_text())
    names = {entry["file"] for entry in manifest["files"]}
    assert names == {"scattering.csv", "scattering.json"}
    assert manifest["status"]["max_unitarity_defect"] < 1e-6


def test_toml_config_and_run_verb(tmp_path):
    doc = ('experiment = "sweep"\nenergies = [0.5, 2.0]\n'
           '[potential]\nkind = "smooth-step"\nv_left = 0.0\nv_right = 1.0\nwidth = 1.0\n')
    cfg = write_config(tmp_path, doc, "run.toml")
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    assert len(read_csv(tmp_path / "o" / "scattering.csv")) == 2


def test_outputs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path, PURE_STEP_SWEEP)
    for name, threads in (("a", "1"), ("b", "3")):
        assert cli.main(["sweep", cfg, "--out", str(tmp_path / name), "--threads", threads]) == 0
    for f in ("scattering.csv", "scattering.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("doc", [
    {"experiment": "sweep", "potential": {"kind": "pure-step", "v_left": 0.0, "v_right": 1.0}},
    {"experiment": "teleport", "potential": {"kind": "pure-step", "v_left": 0.0, "v_right": 1.0}},
    {"experiment": "delay", "potential": {"kind": "pure-step", "v_left": 0.0, "v_right": 1.0}},
    dict(PURE_STEP_SWEEP, energies=[1.0]),  # threshold
    dict(PURE_STEP_SWEEP, colour="red"),
    "experiment = = 1",
])
def test_bad_configs_exit_with_config_code(tmp_path, doc, capsys):
    cfg = write_config(tmp_path, doc)
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_bad_flags(tmp_path):
    cfg = write_config(tmp_path, PURE_STEP_SWEEP)
    assert cli.main(["sweep", cfg, "--threads", "0"]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", cfg, "--tol-scale", "-1"]) == cli.EXIT_CONFIG


def test_missing_config_and_unwritable_output(tmp_path):
    assert cli.main(["run", str(tmp_path / "absent.json")]) == cli.EXIT_IO
    cfg = write_config(tmp_path, PURE_STEP_SWEEP)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["sweep", cfg, "--out", str(blocker / "sub")]) == cli.EXIT_IO


def test_certificate_failure_exit_code(tmp_path):
    # radii far too small for the packet: no plateau in the sigma curve
    doc = {
        "experiment": "sigma",
        "potential": {"kind": "smooth-step", "v_left": 0.0, "v_right": 1.0, "width": 1.0},
        "packet": {"windows": [[1.5, 2.5]]},
        "numerics": {"n": 8192, "dx": 0.2},
        "radii": [1.0, 1.5, 2.0, 3.0, 4.0],
    }
    cfg = write_config(tmp_path, doc)
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CERT


def test_sigma_run_on_smooth_step(tmp_path, capsys):
    doc = {
        "experiment": "sigma",
        "potential": {"kind": "smooth-step", "v_left": 0.0, "v_right": 1.0, "width": 1.0},
        "packet": {"windows": [[1.5, 2.5]]},
        "numerics": {"n": 8192, "dx": 0.2, "sample_dt": 0.25},
        "radii": [40.0, 48.0, 56.0, 64.0, 72.0],
    }
    out = tmp_path / "o"
    assert cli.main(["run", write_config(tmp_path, doc), "--out", str(out)]) == cli.EXIT_OK
    rows = read_csv(out / "sigma_curves.csv")
    assert [float(r["R"]) for r in rows] == doc["radii"]
    status = json.loads((out / "MANIFEST.json").read_text())["status"]
    assert status["sigma_plateau"] == pytest.approx(status["tau_ew"], abs=1e-3)
    assert "sigma_plateau" in capsys.readouterr().out


def test_delay_run_without_potential_gives_no_delay(tmp_path):
    doc = {
        "experiment": "delay",
        "potential": {"kind": "pure-step", "v_left": 0.0, "v_right": 0.0},
        "packet": {"windows": [[1.5, 2.5]]},
        "numerics": {"n": 8192, "dx": 0.2},
        "radii": {"min": 5.0, "max": 20.0, "n": 6},
    }
    out = tmp_path / "o"
    assert cli.main(["run", write_config(tmp_path, doc), "--out", str(out)]) == cli.EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["tau_ew"] == pytest.approx(0.0, abs=1e-9)
    assert report["tau_plateau"] == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(report["tau_sym"], 0.0, atol=1e-6)
    files = {e["file"] for e in json.loads((out / "MANIFEST.json").read_text())["files"]}
    assert {"delay_curves.csv", "report.json", "scattering.csv"} <= files


def test_verify_all_quick(tmp_path, capsys):
    out = tmp_path / "acc"
    assert cli.main(["verify-all", "--quick", "--out", str(out)]) == cli.EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if "criterion" in ln]
    assert len(lines) == 11
    assert sum(ln.startswith("[SKIP]") for ln in lines) == 6
    results = json.loads((out / "acceptance.json").read_text())
    assert all(r["passed"] for r in results)
    assert os.path.exists(out / "MANIFEST.json")


CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIG_DIR)))
def test_shipped_configs_parse(name):
    with open(os.path.join(CONFIG_DIR, name), encoding="utf-8") as fh:
        cfg = cli.load_run_config(fh.read())
    assert cfg.experiment in name
