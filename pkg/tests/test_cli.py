import subprocess
import sys

import pytest

from dpftrl.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, dict(line.split("=", 1) for line in out.out.split())


def test_sensitivity_order(tmp_path, capsys):
    order = tmp_path / "order.txt"
    order.write_text("1\n2\n3\n1\n4\n")
    code, out = run(capsys, "sensitivity", "--method", "order", "--order", str(order))
    assert code == 0
    assert out["zeta"] == "8" and out["rho[2]"] == "3" and out["rho[4]"] == "1"


def test_sensitivity_dp_and_levelwise(capsys):
    assert run(capsys, "sensitivity", "--T", "4", "--E", "2", "--xi", "1")[1]["zeta"] == "8"
    _, out = run(capsys, "sensitivity", "--method", "levelwise", "--T", "8", "--E", "1", "--xi", "0")
    assert out["zeta"] == "4"


def test_account_modes(capsys):
    _, tree = run(capsys, "account", "--mode", "tree", "--n", "1000", "--sigma", "5", "--delta", "1e-5")
    _, rest = run(capsys, "account", "--mode", "restarts", "--n", "1000", "--epochs", "3",
                  "--sigma", "5", "--delta", "1e-5")
    _, ls = run(capsys, "account", "--mode", "ls", "--n", "1024", "--sigma", "5", "--delta", "1e-5")
    assert tree["zeta"] == "10" and rest["zeta"] == "30" and ls["zeta"] == "20"
    assert float(rest["epsilon"]) > float(tree["epsilon"])


def test_calibrate(capsys):
    _, out = run(capsys, "calibrate", "--epsilon", "1", "--delta", "1e-5", "--n", "1000")
    _, back = run(capsys, "account", "--mode", "tree", "--n", "1000", "--sigma", out["sigma"],
                  "--delta", "1e-5")
    assert float(back["epsilon"]) == pytest.approx(1.0, abs=1e-4)


def test_train_csv_and_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg.write_text(f"task=linear\nvariant=ftrl\nn=64\np=3\nsigma=1\nlambda=100\nradius=1\nout={out_a}\n")
    assert run(capsys, "train", "--config", str(cfg))[0] == 0
    assert run(capsys, "train", "--config", str(cfg), "--lambda", "3", "--out", str(out_b))[0] == 0
    a, b = out_a.read_text().splitlines(), out_b.read_text().splitlines()
    assert a[0] == "t,loss,regret,epsilon" and len(a) == 65
    assert a[1:] != b[1:]  # the flag overrode lambda from the file


def test_train_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n")
    code = main(["train", "--config", str(cfg), "--task", "linear", "--variant", "ftrl", "--n", "4",
                 "--p", "2", "--out", str(tmp_path / "x.csv")])
    assert code == 2


def test_equivalence(capsys):
    _, out = run(capsys, "equivalence", "--n", "50", "--p", "4", "--sigma", "1", "--seed", "2",
                 "--relative")
    assert float(out["max_deviation"]) <= 1e-9


def test_errors_exit_nonzero(capsys):
    assert main(["calibrate", "--epsilon", "1", "--delta", "2", "--n", "3"]) == 2
    assert "delta" in capsys.readouterr().err


def test_console_script_runs(tmp_path):
    out = tmp_path / "n.csv"
    proc = subprocess.run([sys.executable, "-m", "dpftrl.cli", "noise-table", "--n", "8", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().count("\n") == 10
