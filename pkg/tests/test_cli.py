from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from pmed.cli import main
from pmed.functionals import mass
from pmed.grid import DensityField
from pmed.snapshot import read_snapshot, write_snapshot


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_scaling_invariant(capsys):
    code, out, err = run(capsys, "classify", "--m", 2, "--q", 1, "--d", 3, "--q1", 3, "--q2", 1.6667)
    assert code == 0 and err == ""
    assert out.strip() == "scaling_invariant"


def test_classify_exact_flag_reads_decimal_literally(capsys):
    code, out, _ = run(capsys, "classify", "--m", 2, "--q", 1, "--d", 3, "--q1", 3, "--q2", 1.6667, "--exact")
    assert code == 0 and out.strip() != "scaling_invariant"
    code, out, _ = run(capsys, "classify", "--m", 2, "--q", 1, "--d", 3, "--q1", 3, "--q2", "5/3", "--exact", "--details")
    assert code == 0 and out.splitlines()[0] == "scaling_invariant"
    assert any(line.startswith("lambda_q = ") for line in out.splitlines())


def test_barenblatt_snapshot_mass(capsys, tmp_path):
    path = tmp_path / "b.snap"
    code, out, err = run(capsys, "barenblatt", "--d", 2, "--m", 2, "--t", 1, "--mass", 1, "--out", path)
    assert code == 0 and err == ""
    f = read_snapshot(path)
    assert isinstance(f, DensityField)
    assert mass(f) == pytest.approx(1.0, abs=1e-8)
    assert float(out.split("=")[1]) == pytest.approx(1.0, abs=1e-8)


def test_wasserstein_translation(capsys, tmp_path):
    from pmed.grid import box_grid

    g = box_grid(2, 64, 2.0)
    x, y = g.mesh
    a = np.maximum(0.0, 0.5 - (x**2 + y**2)) ** 2
    b = np.maximum(0.0, 0.5 - ((x - 0.25) ** 2 + y**2)) ** 2
    write_snapshot(DensityField(g, a), tmp_path / "a.snap")
    write_snapshot(DensityField(g, b), tmp_path / "b.snap")
    code, out, err = run(capsys, "wasserstein", "--p", 2, tmp_path / "a.snap", tmp_path / "b.snap")
    assert code == 0 and err == ""
    assert abs(float(out) - 0.25) <= g.h


def test_unknown_verb_exit_1(capsys):
    code, out, err = run(capsys, "frobnicate")
    assert code == 1
    assert "unknown verb" in err and "usage" in err


def test_no_args_exit_1(capsys):
    assert run(capsys)[0] == 1


def test_help_per_verb(capsys):
    for verb in ("simulate", "ks", "classify", "wasserstein", "barenblatt", "diagnose", "convergence"):
        code, out, _ = run(capsys, verb, "--help")
        assert code == 0 and "usage" in out


def test_validation_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "barenblatt", "--d", 2, "--m", 0.5, "--t", 1, "--out", tmp_path / "x")
    assert code == 1 and "requires m > 1" in err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("m = 0.8\n")
    code, _, err = run(capsys, "simulate", "--config", cfg)
    assert code == 1 and "line 1" in err
    code, _, err = run(capsys, "classify", "--m", 2, "--q", 1, "--d", 3)
    assert code == 1


def test_io_failure_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "diagnose", tmp_path / "missing.snap")
    assert code == 2 and "cannot read" in err
    bad = tmp_path / "bad.snap"
    bad.write_bytes(b"NOPE" + b"\0" * 40)
    code, _, err = run(capsys, "wasserstein", bad, bad)
    assert code == 2 and "offset 0" in err


def test_diagnose_prints_columns(capsys, tmp_path):
    run(capsys, "barenblatt", "--d", 1, "--m", 2, "--t", 1, "--out", tmp_path / "b.snap")
    code, out, err = run(capsys, "diagnose", tmp_path / "b.snap")
    assert code == 0 and err == ""
    values = dict(line.split(" = ") for line in out.splitlines())
    assert float(values["mass"]) == pytest.approx(1.0, abs=1e-8)


CONFIG = """\
m = 2
q = 2, 3
d = 2
cells = 32
half_width = 3
T = 0.2
n = 4
init = barenblatt(t0=1.0, mass=1.0)
drift = rotation(omega=1.0)
"""


def test_simulate_deterministic(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        code, stdout, err = run(capsys, "simulate", "--config", cfg, "--out", out)
        assert code == 0 and err == ""
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "ledger.csv" in files and len(files) >= 3
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    text = (outs[0] / "ledger.csv").read_text()
    assert "# drift = rotation(omega=1.0)" in text


def test_config_echo_reproduces_run(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a")
    echo = [line[2:] for line in (tmp_path / "a" / "ledger.csv").read_text().splitlines() if line.startswith("# ")]
    replay = tmp_path / "replay.cfg"
    replay.write_text("\n".join(line for line in echo if not line.startswith("transport =")) + "\n")
    run(capsys, "simulate", "--config", replay, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "ledger.csv").read_bytes() == (tmp_path / "b" / "ledger.csv").read_bytes()


def test_ks_verb(capsys, tmp_path):
    cfg = tmp_path / "ks.cfg"
    cfg.write_text("m = 2\nd = 2\ncells = 24\nhalf_width = 3\nT = 0.1\nn = 2\n")
    code, _, err = run(capsys, "ks", "--config", cfg, "--out", tmp_path / "ks")
    assert code == 0 and err == ""
    names = {p.name for p in (tmp_path / "ks").iterdir()}
    assert "free_energy.csv" in names
    assert any(n.startswith("c") for n in names) and any(n.startswith("rho") for n in names)
    assert "# sign = " in (tmp_path / "ks" / "free_energy.csv").read_text()


def test_convergence_verb(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("m = 2\nd = 1\ncells = 64\nhalf_width = 4\nT = 0.2\ndrift = constant(c=[1.0])\n")
    code, out, err = run(capsys, "convergence", "--config", cfg, "--n-list", "2,4,8", "--no-w2")
    assert code == 0 and err == ""
    lines = out.splitlines()
    assert lines[0] == "n,l1_error,w2_error" and len(lines) == 5
    assert lines[-2] == "# reference n = 8"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pmed.cli", "classify", "--m", "2", "--q", "1", "--d", "3", "--q1", "3", "--q2", "5/3"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "scaling_invariant" and proc.stderr == ""


def test_wasserstein_subprocess_stderr_clean(tmp_path):
    # the optimal transport backend must not leak import-time logging
    for t, name in ((1.0, "a.snap"), (1.5, "b.snap")):
        assert main(["barenblatt", "--d", "2", "--m", "2", "--t", str(t), "--cells", "48", "--out", str(tmp_path / name)]) == 0
    proc = subprocess.run(
        [sys.executable, "-m", "pmed.cli", "wasserstein", str(tmp_path / "a.snap"), str(tmp_path / "b.snap")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stderr == ""
    assert float(proc.stdout) > 0
