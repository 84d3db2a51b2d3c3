import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import FIXTURES, adapter
from nbrshap import cli


def run(tmp_path, command, text, *extra):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    out = tmp_path / f"out.{command}"
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


GAUSS = "dataset = synthetic:gaussian\nsynthetic_n = 200\nsynthetic_dim = 2\n"


def test_explain_constant(tmp_path):
    code, out = run(tmp_path, "explain", GAUSS + "blackbox = constant\nconstant = 2\ninstance = 0,0\n")
    assert code == 0
    doc = json.loads(out.read_text())
    rec = doc["records"][0]
    assert rec["phi"] == [0.0, 0.0] and rec["phi0"] == pytest.approx(2.0)
    assert rec["features"] == ["x1", "x2"]
    assert rec["config_hash"] == doc["config_hash"] and rec["seed"] == 0
    assert (tmp_path / "out.explain.cfg").exists()


def test_explain_record_fields_and_normalisation(tmp_path):
    text = GAUSS + "blackbox = indicator2d\ninstance = 0.5,2; 0.1,1\nvariance = true\nnormalise = by_std\n"
    code, out = run(tmp_path, "explain", text)
    assert code == 0
    recs = json.loads(out.read_text())["records"]
    assert len(recs) == 2
    for r in recs:
        assert np.std(r["phi"]) == pytest.approx(1.0)
        assert r["normalisation"] == "by_std"
        for key in ("phi", "variance", "phi0", "phi_sum", "eval_count", "seed", "fx"):
            assert key in r


def test_explain_instance_row_and_auto_sigma(tmp_path):
    text = GAUSS + ("blackbox = linear\nbeta = 1,2\ninstance_row = 3\nweighting = neighbourhood\n"
                    "sigma = auto\ngrid = auto:20\n")
    code, out = run(tmp_path, "explain", text)
    assert code == 0
    rec = json.loads(out.read_text())["records"][0]
    assert rec["bandwidth"] is not None and "bandwidth_saturated" in rec


def test_shipped_rulebased_fixture(tmp_path):
    out = tmp_path / "o.json"
    assert cli.main(["explain", "--config", str(FIXTURES / "rulebased3d.cfg"),
                     "--out", str(out)]) == 0
    phi = json.loads(out.read_text())["records"][0]["phi"]
    assert np.allclose(phi, [0.090, 0.090, 0.819], atol=0.03)


def test_rerun_from_sidecar_is_bit_identical(tmp_path):
    code, out = run(tmp_path, "explain", GAUSS + "blackbox = indicator2d\ninstance = 0.3,1\n"
                    "mode = kernelshap\nweighting = neighbourhood\nsigma = 0.7\nseed = 11\n")
    assert code == 0
    again = tmp_path / "again.json"
    assert cli.main(["explain", "--config", str(out) + ".cfg", "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_sweep_grid_of_one_matches_explain(tmp_path):
    base = GAUSS + "blackbox = indicator2d\ninstance = 0.6,2\nweighting = neighbourhood\n"
    code, sweep = run(tmp_path, "sweep", base + "grid = 0.5\n")
    assert code == 0
    code, expl = run(tmp_path, "explain", base + "sigma = 0.5\n")
    phi = json.loads(expl.read_text())["records"][0]["phi"]
    got = [float(r["phi"]) for r in rows(sweep)]
    assert got == phi


def test_sweep_eval_count_constant(tmp_path):
    code, out = run(tmp_path, "sweep", GAUSS + "blackbox = indicator2d\ninstance = 0.6,2\n"
                    "weighting = neighbourhood\ngrid = auto:50\n")
    assert code == 0
    table = rows(out)
    assert len(table) == 100
    assert len({r["eval_count"] for r in table}) == 1


def test_indicator_sweep_fixture_shape(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["sweep", "--config", str(FIXTURES / "indicator2d_sweep.cfg"),
                     "--out", str(out)]) == 0
    table = [r for r in rows(out) if r["feature"] == "x1"]
    near = [float(r["phi"]) for r in table if float(r["sigma"]) == 0.5]
    flat = [float(r["phi"]) for r in table if float(r["sigma"]) == 1e6]
    assert near[0] > near[1] > near[2]
    assert max(flat) - min(flat) < 1e-6


def test_smooth_outputs(tmp_path):
    text = GAUSS + ("blackbox = indicator2d\ninstance = 0.2,1\nfield_size = 40\n"
                    "smooth_sigma = 1e12; 0.5, 0.5\nvariance = true\n")
    code, out = run(tmp_path, "smooth", text)
    assert code == 0
    table = rows(out)
    kinds = {r["kind"] for r in table}
    assert kinds == {"global", "raw", "smoothed"}
    glob = [float(r["phi"]) for r in table if r["kind"] == "global"]
    flat = [float(r["phi"]) for r in table if r["sigma"] == "1000000000000"]
    assert np.allclose(glob, flat, atol=1e-10)


def test_audit_fixture(tmp_path):
    out = tmp_path / "a.json"
    assert cli.main(["audit", "--config", str(FIXTURES / "ring_audit.cfg"),
                     "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    local, uniform = doc["summary"]
    assert local["median_auc"] < uniform["median_auc"]
    for rep in doc["reports"]:
        assert {"n", "k", "seed", "auc", "mean_manifold_distance"} <= set(rep)


@pytest.mark.filterwarnings("ignore:singular KernelSHAP")
def test_bench_counts(tmp_path):
    text = ("dataset = synthetic:gaussian\nblackbox = constant\nbench_L = 50, 100\nbench_M = 6\n"
            "bench_C = 8, 16\nbench_bandwidths = 1, 50\n")
    code, out = run(tmp_path, "bench", text)
    assert code == 0
    table = {(int(r["L"]), int(r["C"]), int(r["bandwidths"])): int(r["eval_count"])
             for r in rows(out)}
    for L in (50, 100):
        for C in (8, 16):
            assert table[(L, C, 1)] == table[(L, C, 50)]
    assert table[(100, 8, 1)] == 2 * table[(50, 8, 1)]


def test_exit_codes(tmp_path, capsys):
    code, _ = run(tmp_path, "explain", "dataset = synthetic:gaussian\n")
    assert code == 2
    code, _ = run(tmp_path, "explain", GAUSS + "blackbox = rulebased3d\ninstance = 0,0\n")
    assert code == 2
    code, _ = run(tmp_path, "explain", "dataset = nowhere.csv\nblackbox = constant\ninstance = 1\n")
    assert code == 2
    code, _ = run(tmp_path, "explain", GAUSS + f"external = {adapter('exits.py')}\ninstance = 0,0\n")
    assert code == 3
    code, _ = run(tmp_path, "explain", GAUSS + "blackbox = constant\ninstance = 0,0\n"
                  "weighting = anti\nsigma = 1\nvariance = true\n")
    assert code == 4
    err = capsys.readouterr().err
    assert "VarianceUnavailable" in err


def test_external_adapter_through_cli(tmp_path):
    base = f"dataset = synthetic:uniform\nsynthetic_n = 300\ninstance = 1.001,1.001,1.001\n"
    code, a = run(tmp_path, "explain", base + f"external = {adapter('rulebased.py')}\n")
    assert code == 0
    code, b = run(tmp_path, "explain", base + "blackbox = rulebased3d\n")
    pa = json.loads(a.read_text())["records"][0]["phi"]
    pb = json.loads(b.read_text())["records"][0]["phi"]
    assert pa == pb


def test_console_script_stdout(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(GAUSS + "blackbox = constant\ninstance = 0,0\n")
    proc = subprocess.run([sys.executable, "-m", "nbrshap.cli", "explain", "--config", str(cfg),
                           "--seed", "4"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["seed"] == 4
