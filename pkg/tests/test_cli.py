import csv
import io
import subprocess
import sys

import pytest

from blowup_lab.cli import main
from blowup_lab.wave_solver import read_records


def run(capsys, *argv):
    status = main(list(argv))
    out = capsys.readouterr()
    return status, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "blowup_lab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("damping", "solve", "scaled-solve", "sweep", "fit", "heat-lower-bound"):
        assert cmd in res.stdout


def test_damping_eval(capsys):
    status, out, _ = run(capsys, "damping", "eval", "--family", "constant", "--params", "c=1", "--what", "B0")
    assert status == 0 and float(out) == pytest.approx(1.0, abs=1e-12)
    status, out, _ = run(capsys, "damping", "eval", "--family", "power", "--params", "beta=0.5", "--what", "B",
                         "--t", "3")
    # b = (1+t)^{-beta}: B = ((1+t)^{1+beta} - 1)/(1+beta)
    assert float(out) == pytest.approx((4.0**1.5 - 1.0) / 1.5)


def test_damping_eval_missing_t_is_error(capsys):
    status, _, err = run(capsys, "damping", "eval", "--family", "constant", "--what", "Phi")
    assert status == 2 and "--t" in err


def test_damping_check(capsys):
    status, out, _ = run(capsys, "damping", "check", "--family", "log_tower", "--params", "n=1")
    assert status == 0 and out.strip()


def test_unknown_family_is_error(capsys):
    status, _, err = run(capsys, "damping", "eval", "--family", "nope", "--what", "B0")
    assert status == 2 and err.startswith("error:")


def test_key_bound(capsys):
    status, out, _ = run(capsys, "key-bound", "--delta", "0.5", "--C0", "1", "--R1", "1", "--theta", "0.5",
                         "--p", "2")
    assert status == 0 and "verdict        : ok" in out


def test_verify_cutoff(capsys):
    status, out, _ = run(capsys, "verify-cutoff", "--family", "constant", "--params", "c=1", "--R", "10",
                         "--points", "60", "--interior", "500")
    (row,) = rows(out)
    assert status == 0 and float(row["R"]) == 10.0
    assert all(float(row[k]) > 0 for k in ("C1", "C2", "C3"))


def test_solve_csv_and_snapshots(capsys, tmp_path):
    csv_path = tmp_path / "runs.csv"
    snaps = tmp_path / "snaps"
    args = ["solve", "--family", "constant", "--params", "c=1", "--p", "2", "--eps", "1", "--L", "40",
            "--h", "0.05", "--tmax", "20", "--csv", str(csv_path), "--snapshots", str(snaps), "--every", "2"]
    status, out, _ = run(capsys, *args)
    (row,) = rows(out)
    assert status == 0 and row["reason"] == "threshold"
    assert float(row["T_num"]) == pytest.approx(6.1758567, rel=1e-6)
    run(capsys, *args)
    assert len(read_records(csv_path)) == 2
    assert len(list(snaps.iterdir())) >= 3


def test_scaled_solve_with_energies(capsys, tmp_path):
    energies = tmp_path / "e.csv"
    status, out, _ = run(capsys, "scaled-solve", "--family", "constant", "--params", "c=1", "--p", "2", "--eps",
                         "1", "--tmax", "50", "--energies", str(energies), "--every", "0.2")
    (row,) = rows(out)
    assert status == 0 and row["reason"] == "threshold"
    assert float(row["B_of_T"]) == pytest.approx(6.1758567, rel=2e-3)
    erows = rows(energies.read_text())
    assert erows and "E5" in erows[0]


def test_compare_frames(capsys):
    status, out, _ = run(capsys, "compare-frames", "--family", "constant", "--params", "c=1", "--eps", "0.05",
                         "--p", "4", "--s", "1")
    rel = float(out.split("rel_total :")[1].split()[0])
    assert status == 0 and rel < 0.01


def test_heat_lower_bound(capsys):
    status, out, _ = run(capsys, "heat-lower-bound", "--p", "2", "--eps-list", "1,0.5", "--solve")
    table = rows(out)
    assert status == 0 and [r["verdict"] for r in table] == ["ok", "ok"]
    assert float(table[0]["t_eps"]) == pytest.approx(2.0, rel=1e-9)


def test_sweep_then_fit(capsys, tmp_path):
    plan = tmp_path / "plan.txt"
    out_csv = tmp_path / "sweep.csv"
    fits = tmp_path / "fits.csv"
    plan.write_text("family = constant\nparams = c=1\np = 2\neps_list = 0.3,0.25,0.2,0.17,0.15\n")
    status, _, _ = run(capsys, "sweep", "--plan", str(plan), "--out", str(out_csv))
    assert status == 0 and len(read_records(out_csv)) == 5
    status, out, _ = run(capsys, "fit", "--csv", str(out_csv), "--model", "power", "--out", str(fits))
    (row,) = rows(out)
    assert status == 0 and row["model"] == "power"
    assert float(row["predicted_slope"]) == -2.0
    assert -2.0 < float(row["slope"]) < -1.0
    assert rows(fits.read_text())[0] == row


def test_sweep_to_stdout(capsys, tmp_path):
    plan = tmp_path / "plan.txt"
    plan.write_text("family = constant\neps_list = 1.0\n")
    status, out, _ = run(capsys, "sweep", "--plan", str(plan))
    (row,) = rows(out)
    assert status == 0 and float(row["eps"]) == 1.0


def test_fit_critical_too_few_points(capsys, tmp_path):
    plan = tmp_path / "plan.txt"
    out_csv = tmp_path / "sweep.csv"
    plan.write_text("family = constant\np = 3\neps_list = 1.2\n")
    run(capsys, "sweep", "--plan", str(plan), "--out", str(out_csv))
    status, _, err = run(capsys, "fit", "--csv", str(out_csv), "--model", "critical")
    assert status == 2 and "need" in err
