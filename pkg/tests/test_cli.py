import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from margint.cli import main
from margint.curve import EffectCurve
from margint.graph import read_edgelist
from margint.sem import Dataset


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--preset", "interaction", "--n", "300", "--seed", "1", "--out", str(out)]) == 0
    return out


def run(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_deterministic(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert run("simulate", "--p", 6, "--n", 50, "--seed", 3, "--out", tmp_path / name) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.edges").read_text().splitlines()[1:] == (tmp_path / "b.edges").read_text().splitlines()[1:]

    def test_shapes(self, tmp_path):
        out = tmp_path / "g.csv"
        assert run("simulate", "--p", 7, "--mech", "gp", "--n", 40, "--out", out) == 0
        d = Dataset.read_csv(out)
        assert d.values.shape == (40, 7)
        assert read_edgelist(tmp_path / "g.edges").p == 7

    def test_oracle_files(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("simulate", "--preset", "nonadd", "--n", 100, "--out", out, "--oracle", "0:3") == 0
        d = Dataset.read_csv(out)
        curve = EffectCurve.read_csv(tmp_path / f"oracle_{d.columns[0]}_{d.columns[3]}.csv")
        assert len(curve.grid) == 9

    def test_needs_source(self, tmp_path):
        assert run("simulate", "--n", 10, "--out", tmp_path / "x.csv") == 1


class TestEffect:
    def test_round_trip(self, simulated, tmp_path):
        out = tmp_path / "e.csv"
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "0,1", "--out", out) == 0
        curve = EffectCurve.read_csv(out)
        assert curve.method == "smint" and curve.adjustment == (0, 1) and len(curve.grid) == 9

    def test_single_grid_value(self, simulated, tmp_path):
        out = tmp_path / "e.csv"
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "0,1", "--grid", "0",
                   "--out", out) == 0
        assert EffectCurve.read_csv(out).grid.tolist() == [0.0]

    @pytest.mark.parametrize("method", ["path-full", "path-partial"])
    def test_path_methods(self, simulated, tmp_path, method):
        out = tmp_path / "e.csv"
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--method", method,
                   "--dag", simulated.with_suffix(".edges"), "--B", 200, "--out", out) == 0
        assert EffectCurve.read_csv(out).method == method

    def test_dag_parents_default(self, simulated, tmp_path):
        out = tmp_path / "e.csv"
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--dag", simulated.with_suffix(".edges"),
                   "--validate", "--out", out) == 0
        assert EffectCurve.read_csv(out).adjustment == (0, 1)

    def test_validate_rejects_bad_set(self, simulated, tmp_path, capsys):
        code = run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "",
                   "--dag", simulated.with_suffix(".edges"), "--validate", "--out", tmp_path / "e.csv")
        assert code == 2
        assert "not a valid adjustment set" in capsys.readouterr().err

    def test_usage_errors(self, simulated, tmp_path):
        assert run("effect", "--data", simulated, "--x", 2, "--y", 2, "--adjust", "") == 1
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3) == 1
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--method", "path-full") == 1
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "", "--grid", "a,b") == 1
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "", "--order", "o.txt") == 1

    def test_data_errors(self, simulated, tmp_path):
        assert run("effect", "--data", tmp_path / "missing.csv", "--x", 0, "--y", 1, "--adjust", "") == 2
        assert run("effect", "--data", simulated, "--x", "nope", "--y", 1, "--adjust", "") == 2

    def test_numerical_failure(self, simulated, tmp_path, capsys):
        code = run("effect", "--data", simulated, "--x", 2, "--y", 3, "--adjust", "0,1", "--grid=-50",
                   "--out", tmp_path / "e.csv")
        assert code == 3
        assert "zero kernel weight" in capsys.readouterr().err

    def test_order_file(self, simulated, tmp_path):
        d = Dataset.read_csv(simulated)
        order = tmp_path / "order.txt"
        order.write_text("\n".join(d.columns) + "\n")
        out = tmp_path / "e.csv"
        assert run("effect", "--data", simulated, "--x", 2, "--y", 3, "--order", order, "--p-max", 1,
                   "--out", out) == 0
        assert EffectCurve.read_csv(out).adjustment == (1,)


class TestRank:
    def test_threshold_above_one(self, simulated, tmp_path, capsys):
        out = tmp_path / "r.csv"
        with pytest.warns(UserWarning):
            code = run("rank", "--data", simulated, "--dag", simulated.with_suffix(".edges"), "--runs", 1,
                       "--top", 2, "--tau", 1.01, "--out", out)
        assert code == 0
        with out.open() as fh:
            rows = list(csv.reader(fh))
        assert rows == [["source", "target", "strength", "frequency"]]
        assert "0 pairs selected" in capsys.readouterr().out

    def test_top_too_large(self, simulated, tmp_path):
        assert run("rank", "--data", simulated, "--dag", simulated.with_suffix(".edges"), "--runs", 1,
                   "--top", 100, "--out", tmp_path / "r.csv") == 1


class TestBenchmark:
    def test_identical_tables(self, tmp_path):
        for name in ("a", "b"):
            assert run("benchmark", "--experiment", "known-dag", "--p", 5, "--n", 100, "--replications", 1,
                       "--methods", "smint,path-full", "--seed", 7, "--out-dir", tmp_path / name) == 0
        for f in ("results.csv", "summary.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert set(summary) <= {"smint", "path-full"}
        assert (tmp_path / "a" / "timings.csv").exists()

    def test_perturbed_grouped_by_distance(self, tmp_path):
        assert run("benchmark", "--experiment", "perturbed", "--p", 6, "--n", 100, "--replications", 1,
                   "--methods", "smint", "--hr", "0,2", "--pairs", 3, "--out-dir", tmp_path) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert all(k.split("/")[1] == "smint" for k in summary)

    def test_bad_experiment_and_method(self, tmp_path):
        assert run("benchmark", "--experiment", "nope", "--out-dir", tmp_path) == 1
        assert run("benchmark", "--experiment", "known-dag", "--methods", "lasso", "--out-dir", tmp_path) == 1
        assert run("benchmark", "--experiment", "perturbed", "--out-dir", tmp_path) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "margint", "simulate", "--preset", "bandwidth", "--n", "20",
                          "--out", str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert np.isfinite(Dataset.read_csv(tmp_path / "d.csv").values).all()


def test_bad_subcommand():
    assert main(["frobnicate"]) == 1
