from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from maxent_patrol.cli import main
from maxent_patrol.model import build_grid, instance_to_dict, save_instance


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def two_cells(tmp_path):
    return _write(tmp_path / "g.json", {"kind": "grid", "T": 1, "N": 2, "k": 1, "moves": []})


@pytest.fixture
def fams22(tmp_path, complete22):
    return _write(tmp_path / "f.json", instance_to_dict(complete22))


@pytest.fixture
def small_game(tmp_path):
    path = tmp_path / "game.json"
    assert main(["generate", "grid", "--seed", "3", "-p", "N=4", "-p", "T=3", "-p", "k=2", "--out", str(path)]) == 0
    return str(path)


def test_count_grid(two_cells, capsys):
    assert main(["count", two_cells]) == 0
    assert capsys.readouterr().out.strip() == "log_count=0.693147"


def test_count_fams(fams22, capsys):
    assert main(["count", fams22, "--exact"]) == 0
    assert capsys.readouterr().out.splitlines() == ["count=1", "log_count=0.000000"]


def test_count_weights(two_cells, capsys):
    assert main(["count", two_cells, "--weights", "1,3"]) == 0
    assert capsys.readouterr().out.strip() == f"log_count={np.log(4):.6f}"


def test_zero_count_exit(two_cells, capsys):
    assert main(["count", two_cells, "--weights", "0,0"]) == 3
    assert "log_count=-inf" in capsys.readouterr().out


def test_missing_file(tmp_path):
    assert main(["count", str(tmp_path / "nope.json")]) == 2


def test_bad_weight_length(two_cells):
    assert main(["count", two_cells, "--weights", "1,2,3"]) == 2


def test_sample_reproducible(small_game, tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["sample", small_game, "--solve", "-n", "3", "--seed", "5", "--out", str(a)]) == 0
    assert main(["sample", small_game, "--solve", "-n", "3", "--seed", "5", "--out", str(b)]) == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 3
    assert a.read_bytes() == b.read_bytes()
    assert "distinct=" in capsys.readouterr().err


def test_sample_unimplementable(tmp_path, capsys):
    game = _write(tmp_path / "g.json", instance_to_dict(build_grid(2, 2, [(0, 0, 0), (0, 0, 1), (0, 1, 0),
                                                                          (0, 1, 1)], 1)))
    assert main(["sample", game, "--x", "1,1,0.5,0.5", "--seed", "0", "--max-iters", "500"]) == 4
    assert "not implementable" in capsys.readouterr().err


def test_sample_needs_marginals(small_game):
    assert main(["sample", small_game, "--seed", "0"]) == 2


def test_sample_weights_out(small_game, tmp_path):
    w = tmp_path / "w.json"
    assert main(["sample", small_game, "--solve", "-n", "1", "--seed", "0", "--out", str(tmp_path / "s.jsonl"),
                 "--weights-out", str(w)]) == 0
    assert "theta" in json.loads(w.read_text())


def test_solve(small_game, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", small_game, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert np.isclose(sum(m["prob"] for m in data["mixture"]), 1.0)
    assert len(data["marginals"]) == 12


def test_solve_needs_payoffs(two_cells):
    assert main(["solve", two_cells]) == 2


def test_generate_stdout(capsys):
    assert main(["generate", "fams", "--seed", "7", "-p", "n=20"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["kind"] == "fams" and "payoffs" in data


def test_generate_bad_param():
    assert main(["generate", "grid", "--seed", "0", "-p", "N"]) == 2


def _experiment(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["experiment", "fig5a", "--n-seeds", "2", "--values", "2,3", "--samples", "100",
                 "--out", str(out), *extra])
    return code, out


def test_experiment_csv(tmp_path):
    code, out = _experiment(tmp_path, "r", "--gnuplot")
    assert code == 0
    text = (out / "fig5a.csv").read_text().splitlines()
    assert text[0] == "# maxent-patrol results v1; preset=fig5a"
    rows = list(csv.DictReader(text[1:]))
    assert len(rows) == 2 * 2 * 3
    assert {r["algorithm"] for r in rows} == {"ColG", "MaxEn", "CARD"}
    assert (out / "fig5a_summary.csv").exists() and (out / "fig5a.dat").exists()


def test_experiment_deterministic(tmp_path):
    _, a = _experiment(tmp_path, "a")
    _, b = _experiment(tmp_path, "b")
    assert (a / "fig5a.csv").read_bytes() == (b / "fig5a.csv").read_bytes()


def test_experiment_empty_sweep(tmp_path):
    cfg = _write(tmp_path / "empty.json", {"family": "grid", "sweep": "T", "values": []})
    assert main(["experiment", cfg, "--out", str(tmp_path)]) == 2


def test_experiment_unknown_preset(tmp_path):
    assert main(["experiment", "fig9z", "--out", str(tmp_path)]) == 2


def test_console_script(two_cells):
    res = subprocess.run([sys.executable, "-m", "maxent_patrol.cli", "count", two_cells],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "log_count=0.693147"
