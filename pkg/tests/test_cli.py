import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from greenldp.cli import run
from greenldp.green import read_profile
from greenldp.model import nearest_neighbor, serialize_model

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
WALK1D = str(CONFIGS / "walk1d.toml")
WALK2D = str(CONFIGS / "walk2d.toml")
HALF2D = str(CONFIGS / "half2d.toml")


def values(text):
    return dict(line.split(" ", 1) for line in text.strip().splitlines())


def test_phi_at_zero(capsys):
    assert run(["phi", "--model", WALK1D, "--a", "0"]) == 0
    out = values(capsys.readouterr().out)
    assert float(out["phi"]) == 1.0 and float(out["lambda"]) == 0.0
    assert float(out["grad"]) == pytest.approx(0.4, abs=1e-15)


def test_qpot_closed_form(capsys):
    assert run(["qpot", "--model", WALK1D, "--q", "0", "--q-prime=-1"]) == 0
    out = values(capsys.readouterr().out)
    assert float(out["value"]) == pytest.approx(math.log(7 / 3), rel=1e-9)
    assert float(out["t_star"]) == pytest.approx(2.5, rel=1e-8)


def test_qpot_methods_agree(capsys):
    vals = []
    for method in ("support", "inf_t"):
        assert run(["qpot", "--model", WALK2D, "--q", "0,0", "--q-prime=-1,0", "--method", method]) == 0
        vals.append(float(values(capsys.readouterr().out)["value"]))
    assert vals[0] == pytest.approx(vals[1], rel=1e-7)


def test_rate_and_finite_horizon(capsys):
    assert run(["rate", "--model", WALK1D, "--v", "0"]) == 0
    out = values(capsys.readouterr().out)
    assert float(out["value"]) == pytest.approx(0.5 * math.log(1 / 0.84), rel=1e-12)
    assert out["position"] == "interior"
    assert run(["rate", "--model", WALK1D, "--T", "2.5", "--q", "0", "--q-prime=-1"]) == 0
    assert float(values(capsys.readouterr().out)["value"]) == pytest.approx(math.log(7 / 3), rel=1e-9)
    assert run(["rate", "--model", WALK1D]) == 1


def test_green_value_and_profile(tmp_path, capsys):
    prof = tmp_path / "profile.bin"
    args = ["green", "--model", WALK1D, "--q", "0", "--q-prime", "0", "--delta", "0.5", "--profile", str(prof)]
    assert run(args) == 0
    out = values(capsys.readouterr().out)
    assert float(out["value"]) == pytest.approx(2.5, rel=1e-9)
    p = read_profile(prof)
    assert math.fsum(p) == pytest.approx(2.5, rel=1e-9)


def test_green_truncated_halfspace(capsys):
    args = ["green", "--model", HALF2D, "--q", "0,0", "--q-prime", "0,3", "--delta", "0.5", "--R", "8"]
    assert run(args) == 0
    assert 0 < float(values(capsys.readouterr().out)["value"]) < 1


def test_green_refuses_recurrent_walk(tmp_path, capsys):
    path = tmp_path / "sym.toml"
    path.write_text(serialize_model(nearest_neighbor([0.5, 0.5])))
    assert run(["green", "--model", str(path), "--q", "0", "--q-prime", "0", "--delta", "0.5"]) == 1
    assert "recurrent" in capsys.readouterr().err


def test_scan_csv(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    args = ["scan", "--model", WALK1D, "--q", "0", "--q-prime=-1", "--delta", "0.25",
            "--n-grid", "8,16,24", "--output", str(out)]
    assert run(args) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "n,R,delta,log_measure,predicted,backend,std_error"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["8", "16", "24"]
    assert "slope_fit" in capsys.readouterr().err


def test_mc_matches_closed_form(capsys):
    args = ["mc", "--model", WALK1D, "--q", "0", "--q-prime=-10", "--delta", "0.5",
            "--paths", "20000", "--seed", "3", "--threads", "1"]
    assert run(args) == 0
    out = values(capsys.readouterr().out)
    exact = 2.5 * (3 / 7) ** 10
    assert abs(float(out["mean"]) - exact) <= 4 * float(out["std_error"])


def test_mc_hitting_certificate(capsys):
    args = ["mc", "--model", WALK1D, "--q", "0", "--q-prime=-3", "--paths", "20000", "--hitting",
            "--tilt", str(math.log(3 / 7)), "--horizon", "400"]
    assert run(args) == 0
    out = values(capsys.readouterr().out)
    assert out["satisfied"] == "True"
    assert float(out["mean"]) == pytest.approx((3 / 7) ** 3, rel=1e-9)


def test_cutoffs(capsys):
    assert run(["cutoffs", "--model", WALK1D, "--A", "1", "--q", "0", "--q-prime=-1"]) == 0
    out = values(capsys.readouterr().out)
    mc = 0.7 * math.exp(2) + 0.3 * math.exp(-2)
    assert float(out["kappa"]) == 1 / (2 * math.log(float(out["M_c"])))
    assert float(out["M_c"]) == pytest.approx(mc, rel=1e-15)
    assert float(out["delta0"]) == 0.0625


def test_verify_identity_suite_only(capsys):
    assert run(["verify", "--model", WALK2D, "--samples", "20", "--criteria", "0", "--threads", "1"]) == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("all checks passed")
    assert out.count("PASS") >= 7


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["phi", "--model", WALK1D],
        ["phi", "--model", WALK1D, "--a", "x"],
        ["phi", "--model", WALK1D, "--a", "0", "--threads", "0"],
        ["phi", "--model", "/nonexistent.toml", "--a", "0"],
        ["qpot", "--model", HALF2D, "--q", "0,0", "--q-prime", "1,1"],
        ["qpot", "--model", WALK1D, "--q", "0,0", "--q-prime", "1,1"],
    ],
)
def test_invalid_input_exit_one(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err


def test_bad_model_file(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('dim = 1\nstate_space = "full"\n[interior]\nsupport = [[1], [-1]]\nprobs = [0.7, 0.4]\n')
    assert run(["phi", "--model", str(bad), "--a", "0"]) == 1
    assert "interior.probs" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "greenldp.cli", "phi", "--model", WALK1D, "--a", "0.5"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    phi = float(values(proc.stdout)["phi"])
    assert phi == 0.7 * np.exp(0.5) + 0.3 * np.exp(-0.5)
