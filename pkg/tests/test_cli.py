import json

import pytest

from ritzbounds import cli
from ritzbounds.lab import read_csv


def test_example1_small(tmp_path, capsys):
    out = tmp_path / "e1.csv"
    plot = tmp_path / "e1.gp"
    rc = cli.main(["example1", "--size", "60", "--trials", "3", "--inner", "5",
                   "--out", str(out), "--plot", str(plot)])
    assert rc == 0
    cols = read_csv(out)
    assert len(cols["inner_step"]) == 5 * 3
    assert "chebyshev_mean_error" in cols
    assert plot.exists()


def test_example2_indices_and_block(tmp_path):
    out = tmp_path / "e2.csv"
    rc = cli.main(["example2", "--size", "120", "--trials", "2", "--inner", "4",
                   "--indices", "2,5", "--bounds", "B2", "--out", str(out)])
    assert rc == 0
    cols = read_csv(out)
    assert sorted(set(cols["ritz_index"])) == [2, 5]


def test_run_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spectrum": "example1", "n": 60, "p": 2, "k": 4, "m": 2,
                               "trials": 2, "bounds": ["B1"]}))
    out = tmp_path / "r.csv"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    assert len(read_csv(out)["inner_step"]) == (4 + 3) * 2


def test_run_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p": 0}))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "p:" in capsys.readouterr().err


def test_bounds_subcommand(capsys):
    assert cli.main(["bounds", "--spectrum", "example1", "--psi", "1.2", "--block", "3",
                     "--degree", "14", "--outer", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    rows = {(r["bound"], r["i"]): r for r in data["bounds"]}
    assert len(rows) == 6
    # B2 at i = p coincides with B1
    assert rows[("B1", 3)]["log_measure_bound"] == rows[("B2", 3)]["log_measure_bound"]
    assert rows[("B1", 1)]["t"] == 3


def test_bounds_spectrum_file(tmp_path, capsys):
    spec = tmp_path / "s.txt"
    spec.write_text("3\n2\n1\n0\n")
    assert cli.main(["bounds", "--spectrum", str(spec), "--psi", "2.5", "--block", "1",
                     "--degree", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["bounds"][0]["t"] == 1


def test_bounds_flagged_psi(capsys):
    assert cli.main(["bounds", "--spectrum", "example1", "--psi", "-1", "--block", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert all("flag" in r and r["flag"] for r in data["bounds"])


def test_missing_spectrum_file(capsys):
    assert cli.main(["bounds", "--spectrum", "/nonexistent/s.txt", "--psi", "1"]) == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        cli.main([])
