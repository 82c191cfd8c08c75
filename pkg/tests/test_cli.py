"""End-to-end command line runs, in process.

Every test drives main(argv) with --out pointed at a temp directory, then
inspects exit codes, table headers, and report.json: the same artifacts a
shell user would see.
"""

import csv
import json
import os
import warnings

import numpy as np
import pytest

from otflow.cli import RunConfig, _resolve_example, main

UNIFORM_12 = '{"kind": "uniform", "lo": 1.0, "hi": 2.0}'
AFFINE_IMAGE = ('{"kind": "affine_image", "base": {"kind": "uniform", '
                '"lo": 1.0, "hi": 2.0}, "alpha": 0.3333333333333333, '
                '"beta": -3.0}')
GAUSS_01 = '{"kind": "gaussian", "mean": 0.0, "std": 1.0}'
GAUSS_12 = '{"kind": "gaussian", "mean": 1.0, "std": 2.0}'
BALL_1 = '{"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}'
BALL_2 = '{"kind": "ball", "center": [0.0, 0.0], "radius": 2.0}'


def run_cli(argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return main(argv)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.json")) as fh:
        return json.load(fh)


class TestMapCommand:
    def test_gaussian_pair(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["map", "--mu0", GAUSS_01, "--mu1", GAUSS_12,
                        "--n", "64", "--out", out])
        assert code == 0
        header, rows = read_csv(os.path.join(out, "map.csv"))
        assert header == ["x", "T", "Tp"]
        assert len(rows) == 64
        for row in rows[20:44]:
            x, T, Tp = (float(v) for v in row)
            assert abs(T - (2.0 * x + 1.0)) <= 1e-9
            assert abs(Tp - 2.0) <= 1e-7
        rep = read_report(out)
        assert rep["ok"] is True and rep["schema_version"] == 1

    def test_json_format(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["map", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--n", "16", "--format", "json", "--out", out])
        assert code == 0
        with open(os.path.join(out, "map.json")) as fh:
            records = json.load(fh)
        assert len(records) == 16
        assert set(records[0]) == {"x", "T", "Tp"}
        mid = records[8]
        assert abs(mid["T"] - (3.0 * mid["x"] - 3.0)) <= 1e-9


class TestFieldCommand:
    def test_affine_pair(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["field", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--n", "64", "--out", out])
        assert code == 0
        header, rows = read_csv(os.path.join(out, "field.csv"))
        assert header == ["x", "v"]
        assert len(rows) == 64
        rep = read_report(out)
        assert rep["seed_kind"] == "affine"
        assert "field" in rep

    def test_eps_requests_approximate_variant(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["field", "--mu0", GAUSS_01,
                        "--mu1", '{"kind": "gaussian", "mean": 0.0, "std": 2.0}',
                        "--eps", "1e-3", "--n", "64", "--out", out])
        assert code == 0
        rep = read_report(out)
        assert rep["approximate"]["eps"] == 1e-3
        assert rep["approximate"]["w1_target_gap"] <= 1e-3
        assert rep["approximate"]["candidates_tried"] >= 1


class TestFlowCommand:
    def test_trajectory_reaches_map_value(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["flow", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--x0", "1.25", "--n", "64", "--out", out])
        assert code == 0
        header, rows = read_csv(os.path.join(out, "flow.csv"))
        assert header == ["t", "phi"]
        assert len(rows) == 65
        assert float(rows[0][1]) == pytest.approx(1.25, abs=1e-9)
        assert float(rows[-1][1]) == pytest.approx(0.75, abs=1e-6)
        ts = [float(r[0]) for r in rows]
        assert ts[0] == 0.0 and ts[-1] == 1.0


class TestVerifyCommand:
    def test_identity_pair_passes(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["verify", "--mu0", UNIFORM_12, "--mu1", UNIFORM_12,
                        "--n", "1024", "--out", out])
        assert code == 0
        rep = read_report(out)
        assert rep["ok"] is True
        assert rep["verification"]["passed"] is True
        assert rep["verification"]["monotonicity_violations"] == 0

    def test_unreachable_tolerance_exits_one_with_report(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["verify", "--mu0", GAUSS_01, "--mu1", GAUSS_12,
                        "--n", "1024", "--tol-julia", "1e-16", "--out", out])
        assert code == 1
        rep = read_report(out)
        assert rep["ok"] is False
        assert rep["verification"]["passed"] is False
        assert rep["verification"]["tolerances"]["julia"] == 1e-16


class TestExampleCommand:
    def test_affine_end_to_end(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["example", "affine", "--n", "256", "--out", out])
        assert code == 0
        for name in ("map", "field", "density0", "density1", "flow"):
            assert os.path.exists(os.path.join(out, f"{name}.csv")), name
        rep = read_report(out)
        assert rep["example"] == "affine"
        assert rep["verification"]["passed"] is True
        header, rows = read_csv(os.path.join(out, "density0.csv"))
        assert header == ["x", "pdf"]
        assert float(rows[len(rows) // 2][1]) == pytest.approx(1.0, abs=1e-9)

    def test_affine_custom_slope(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["example", "affine", "--alpha", "2.0", "--beta", "0.5",
                        "--n", "256", "--out", out])
        assert code == 0
        rep = read_report(out)
        assert rep["parameters"] == {"alpha": 2.0, "beta": 0.5}
        header, rows = read_csv(os.path.join(out, "map.csv"))
        x, T, _ = (float(v) for v in rows[100])
        assert abs(T - (2.0 * x + 0.5)) <= 1e-9

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (out_a, out_b):
            assert run_cli(["example", "affine", "--n", "256",
                            "--out", out]) == 0
        for name in ("map.csv", "field.csv", "flow.csv", "report.json"):
            with open(os.path.join(out_a, name), "rb") as fh:
                blob_a = fh.read()
            with open(os.path.join(out_b, name), "rb") as fh:
                blob_b = fh.read()
            assert blob_a == blob_b, name

    def test_accumulating_routing(self, tmp_path):
        rc = RunConfig(command="example", out=str(tmp_path), ck="inf",
                       extra={"name": "accumulating"})
        assert _resolve_example(rc) == ("accumulating-cinf", {})
        rc = RunConfig(command="example", out=str(tmp_path), ck="1",
                       extra={"name": "accumulating"})
        assert _resolve_example(rc) == ("accumulating-c1", {})
        from otflow.errors import InputError
        rc = RunConfig(command="example", out=str(tmp_path), ck="7",
                       extra={"name": "accumulating"})
        with pytest.raises(InputError):
            _resolve_example(rc)


class TestPathologyCommand:
    def test_log_squared_tables(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["pathology", "--variant", "log_squared", "--out", out])
        assert code == 0
        header, rows = read_csv(os.path.join(out, "growth_log_squared.csv"))
        assert header == ["i", "alpha", "beta", "Tp", "P", "lower_bound"]
        assert int(rows[0][0]) == 0 and float(rows[0][4]) == 1.0
        header, rows = read_csv(os.path.join(out, "divergence_log_squared.csv"))
        assert header == ["m", "delta", "l1_partial", "increment", "l1_field",
                          "lower_bound", "anchor_speed", "clock_defect"]
        assert [int(r[0]) for r in rows] == [10, 100, 1000, 10000]
        vals = [float(r[2]) for r in rows]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        rep = read_report(out)
        assert rep["ok"] is True
        v = rep["variants"]["log_squared"]
        assert v["crossing_index"] is None
        assert v["l1_partial_increasing"] is True


class TestSudakovCommand:
    def test_radial_disks(self, tmp_path):
        out = str(tmp_path)
        code = run_cli(["sudakov", "--mu0", BALL_1, "--mu1", BALL_2,
                        "--n", "1024", "--seed", "7", "--out", out])
        assert code == 0
        header, rows = read_csv(os.path.join(out, "rays.csv"))
        assert header == ["ray", "alpha0", "alpha1", "w1"]
        assert len(rows) == 64
        assert max(float(r[3]) for r in rows) <= 1e-4
        rep = read_report(out)
        assert rep["verification"]["rng_seed"] == 7
        assert rep["decomposition"]["kind"] == "radial"
        assert rep["ok"] is True

    def test_uncentered_balls_exit_two(self, tmp_path, capsys):
        code = run_cli(["sudakov", "--mu0", BALL_1,
                        "--mu1", '{"kind": "ball", "center": [1.0, 0.0], '
                                 '"radius": 2.0}',
                        "--out", str(tmp_path)])
        assert code == 2
        assert "common center" in capsys.readouterr().err


class TestBadInput:
    def test_invalid_json_exits_two(self, tmp_path, capsys):
        code = run_cli(["map", "--mu0", '{"kind": "uniform", lo: 1}',
                        "--mu1", UNIFORM_12, "--out", str(tmp_path)])
        assert code == 2
        err = capsys.readouterr().err
        assert "line 1 column" in err

    def test_unknown_kind_exits_two(self, tmp_path, capsys):
        code = run_cli(["map", "--mu0", '{"kind": "cauchy", "loc": 0}',
                        "--mu1", UNIFORM_12, "--out", str(tmp_path)])
        assert code == 2
        assert "cauchy" in capsys.readouterr().err

    def test_bad_grid_size_exits_two(self, tmp_path, capsys):
        code = run_cli(["map", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--n", "100", "--out", str(tmp_path)])
        assert code == 2
        assert "power of two" in capsys.readouterr().err

    def test_bad_seed_order_exits_two(self, tmp_path, capsys):
        code = run_cli(["field", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--seed-kind", "hermite_ck", "--ck", "2",
                        "--out", str(tmp_path)])
        assert code == 2
        assert "hermite_ck" in capsys.readouterr().err


class TestOutputDirectory:
    def test_env_var_fallback(self, tmp_path, monkeypatch):
        target = tmp_path / "from-env"
        monkeypatch.setenv("OTFLOW_OUT", str(target))
        code = run_cli(["map", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--n", "16"])
        assert code == 0
        assert (target / "map.csv").exists()
        assert (target / "report.json").exists()

    def test_flag_overrides_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OTFLOW_OUT", str(tmp_path / "ignored"))
        chosen = tmp_path / "chosen"
        code = run_cli(["map", "--mu0", UNIFORM_12, "--mu1", AFFINE_IMAGE,
                        "--n", "16", "--out", str(chosen)])
        assert code == 0
        assert (chosen / "map.csv").exists()
        assert not (tmp_path / "ignored").exists()
