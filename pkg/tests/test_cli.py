import json
import subprocess
import sys

import pytest

from hjhomog.cli import main
from hjhomog.efftable import load
from hjhomog.grids import read_csv

from conftest import CONFIGS

EXAMPLE_A = str(CONFIGS / "example_a.json")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cell(capsys, tmp_path):
    code, out, _ = run(capsys, "cell", "--config", EXAMPLE_A, "--r", "1", "--p", "4",
                       "--corrector-out", str(tmp_path / "v.csv"))
    data = json.loads(out)
    assert code == 0 and data["lambda"] == pytest.approx(6.0, abs=2e-2)
    assert read_csv(tmp_path / "v.csv").grid.n == data["n"] == 256


def test_cell_component_out_of_range(capsys):
    code, _, err = run(capsys, "cell", "--config", EXAMPLE_A, "--component", "2")
    assert code == 2 and "component" in err


def test_table(capsys, tmp_path):
    out_path = tmp_path / "t.hbar"
    code, out, _ = run(capsys, "table", "--config", EXAMPLE_A, "--axes", "r1:1:1:1 p1:-2:2:5",
                       "--out", str(out_path), "--n", "128", "--csv")
    assert code == 0
    table = load(out_path)
    assert table.query(0, 0, 1.0, 2.0) == pytest.approx(4.0, abs=2e-2)
    assert (tmp_path / "t.csv").read_text().startswith("# HBAR1 M=1 N=1 components=1\n")


def test_evolve_oscillating_and_homogenized(capsys, tmp_path):
    code, out, _ = run(capsys, "evolve", "--config", EXAMPLE_A, "--eps", "1/5", "--n", "160", "--T", "0.2",
                       "--snapshots", "0.1", "--out", str(tmp_path / "osc.csv"))
    data = json.loads(out)
    assert code == 0 and data["linf_ok"] and len(data["snapshots"]) == 1
    code, out, _ = run(capsys, "evolve", "--config", EXAMPLE_A, "--n", "160", "--T", "0.2",
                       "--out", str(tmp_path / "hom.csv"))
    assert code == 0 and read_csv(tmp_path / "hom.csv").grid.n == 160


def test_evolve_rejects_coarse_grid(capsys):
    code, _, err = run(capsys, "evolve", "--config", EXAMPLE_A, "--eps", "1/5", "--n", "64")
    assert code == 2 and "eps/32" in err


def test_converge_and_plotdata(capsys, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"system": EXAMPLE_A, "eps": ["1/5", "1/10"], "T": 0.2}))
    code, out, _ = run(capsys, "converge", "--config", str(cfg), "--out-dir", str(tmp_path / "a"))
    assert "PASS  convergence_monotone" in out
    code, out, _ = run(capsys, "plotdata", "--report", str(tmp_path / "a" / "convergence.json"),
                       "--out-dir", str(tmp_path / "b"))
    assert code == 0
    for name in ("eps_error.csv", "hbar_slice.csv", "solution_profiles.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_config(capsys):
    code, _, err = run(capsys, "verify")
    assert code == 2 and "--config" in err


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "hjhomog", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "converge" in done.stdout
