import csv
import math
import shlex

import numpy as np
import pytest

from sdde_tem import cli
from sdde_tem.model import ModelCatalogEntry, SddeModel, builtin_example_1


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def report(path):
    out = {}
    for line in open(path):
        key, _, val = line.rstrip("\n").partition(": ")
        out[key] = val
    return out


def rerun(tmp_path, rep, name):
    argv = shlex.split(rep["command"])[1:] + ["--out-dir", str(tmp_path / name)]
    assert cli.main(argv) == 0
    return tmp_path / name


def test_gamma_command(capsys):
    assert cli.main(["gamma", "--k6bar", "2", "--k6", "0.6", "--k7bar", "2", "--k7", "1",
                     "--tau", "1"]) == 0
    out = capsys.readouterr().out
    assert "gamma_star = 0.693147" in out
    assert "1.8862" in out and "1.9937" in out


def test_gamma_command_with_step_bound(capsys):
    khat = 2 * (1 + math.exp(2.6))
    assert cli.main(["gamma", "--k6bar", "2", "--k6", "0.6", "--k7bar", "2", "--k7", "1",
                     "--gamma", "0.69", "--epsilon", "0.5", "--khat", repr(khat),
                     "--mu", "0.01"]) == 0
    line = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("dt_bar")][0]
    assert float(line.split()[2]) >= 2**-7


def test_simulate_csv(tmp_path):
    assert cli.main(["simulate", "--model", "example2", "--scheme", "stab-tem", "--n", "128",
                     "--T", "1", "--paths", "1", "--seed", "42", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "path.csv")
    assert rows[0] == ["t", "x_1", "x_2", "pre_norm", "post_norm", "truncated"]
    assert len(rows) == 1 + 129
    assert rows[1][:3] == ["0", "1", "0"]
    t = [float(r[0]) for r in rows[1:]]
    assert t[-1] == 1.0
    assert {r[5] for r in rows[1:]} <= {"0", "1"}
    # 17 significant digits
    assert any(len(r[3].replace(".", "").lstrip("0")) >= 15 for r in rows[2:])
    rep = report(tmp_path / "report.txt")
    assert rep["seed"] == "42"
    again = rerun(tmp_path, rep, "again")
    assert read_csv(again / "path.csv") == rows


def test_simulate_em_flags_divergence(tmp_path):
    assert cli.main(["simulate", "--model", "example2", "--scheme", "em", "--n", "128",
                     "--T", "4", "--seed", "1", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "path.csv")
    assert rows[0][-1] == "nonfinite"
    assert len(rows) == 1 + 513
    rep = report(tmp_path / "report.txt")
    assert rep["truncation_bound"] == "inf"


def test_simulate_many_paths_and_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    assert cli.main(["simulate", "--model", "example1", "--n", "8", "--T", "1",
                     "--paths", "3"]) == 0
    rows = read_csv(tmp_path / "path.csv")
    assert rows[0][0] == "path"
    assert sorted({r[0] for r in rows[1:]}) == ["0", "1", "2"]


def test_converge_command(tmp_path):
    argv = ["converge", "--model", "example1", "--p", "3", "--n-list", "8,16,32",
            "--ref-n", "256", "--samples", "20", "--T", "1", "--seed", "7",
            "--out-dir", str(tmp_path / "a")]
    assert cli.main(argv) == 0
    rows = read_csv(tmp_path / "a" / "converge.csv")
    assert rows[0] == ["dt", "samples", "error", "stderr"]
    assert [float(r[0]) for r in rows[1:]] == [1 / 8, 1 / 16, 1 / 32]
    rep = report(tmp_path / "a" / "report.txt")
    assert math.isfinite(float(rep["fitted_slope"]))
    again = rerun(tmp_path, rep, "b")
    assert read_csv(again / "converge.csv") == rows
    assert report(again / "report.txt")["fitted_slope"] == rep["fitted_slope"]


def test_converge_threads_do_not_change_results(tmp_path):
    base = ["converge", "--model", "example1", "--n-list", "8,16,32", "--ref-n", "128",
            "--samples", "12", "--batch-size", "4", "--seed", "3"]
    assert cli.main(base + ["--out-dir", str(tmp_path / "one")]) == 0
    assert cli.main(base + ["--threads", "3", "--out-dir", str(tmp_path / "three")]) == 0
    assert read_csv(tmp_path / "one" / "converge.csv") == read_csv(tmp_path / "three" / "converge.csv")


def test_stability_command(tmp_path):
    assert cli.main(["stability", "--model", "example2", "--n", "128", "--T", "3",
                     "--samples", "30", "--as-samples", "10", "--seed", "2",
                     "--out-dir", str(tmp_path)]) == 0
    ms = read_csv(tmp_path / "stability_ms.csv")
    assert ms[0] == ["t", "mean_square", "stderr"] and len(ms) == 1 + 385
    ex = read_csv(tmp_path / "stability_as.csv")
    assert ex[0] == ["path", "exponent"] and len(ex) == 11
    rep = report(tmp_path / "report.txt")
    assert float(rep["gamma_used"]) == 0.69
    assert float(rep["gamma_star"]) == pytest.approx(math.log(2), abs=1e-9)
    assert float(rep["dt_bar"]) >= 2**-7
    again = rerun(tmp_path, rep, "again")
    assert read_csv(again / "stability_ms.csv") == ms


@pytest.mark.parametrize("argv", [
    ["converge", "--n-list", "3,8", "--ref-n", "64"],
    ["converge", "--n-list", "8", "--ref-n", "64", "--samples", "1"],
    ["converge", "--n-list", "8", "--T", "-1"],
    ["simulate", "--model", "example1", "--n", "0"],
    ["simulate", "--model", "example2", "--n", "8", "--scheme", "tem"],
    ["simulate", "--n", "8", "--profile", "polynomial:alpha=2,k4=12,q=15,r=9"],
    ["simulate", "--n", "8", "--profile", "weird:mu=1"],
    ["stability", "--model", "example1"],
    ["stability", "--model", "example2", "--epsilon", "0.9"],
    ["stability", "--model", "example2", "--fit-window", "3,20", "--T", "4"],
    ["simulate", "--n", "8", "--seed", "-4"],
    ["simulate", "--model", "nope", "--n", "8"],
])
def test_config_errors_exit_2(argv, tmp_path):
    with pytest.raises(SystemExit) as info:
        code = cli.main(argv + ["--out-dir", str(tmp_path)])
        raise SystemExit(code)
    assert info.value.code == 2
    assert not (tmp_path / "converge.csv").exists()
    assert not (tmp_path / "stability_ms.csv").exists()


def test_blowup_exit_3(monkeypatch, tmp_path, capsys):
    ex1 = builtin_example_1()
    bad = SddeModel(1, 1, 1.0, lambda x, y: np.where(x > 0.5, np.inf, 1.0),
                    lambda x, y: np.zeros(np.shape(x) + (1,)), lambda t: np.zeros(1), 0.0)
    entry = ModelCatalogEntry("example1", bad, ex1.recommended_profile)
    monkeypatch.setattr(cli, "get_entry", lambda name: entry)
    code = cli.main(["simulate", "--n", "4", "--T", "3", "--out-dir", str(tmp_path)])
    assert code == 3
    # x: 0.25, 0.5, 0.75, then f = inf
    assert "step 4" in capsys.readouterr().err


def test_io_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--n", "8", "--out-dir", str(blocker / "sub")]) == 4


def test_parse_profile():
    m = builtin_example_1().model
    p = cli.parse_profile("polynomial:alpha=2,k4=12,q=15,r=3", m)
    assert p.k_const == 72.0 and p.mu == 0.5
    p = cli.parse_profile("stability:mu=0.01", m)
    assert p.k_const == 4.0
