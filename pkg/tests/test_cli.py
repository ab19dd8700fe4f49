import json
import time
from pathlib import Path

import numpy as np
import pytest

from delaypred.cli import main, parse_scenario, ScenarioError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scalar_scenario_dict(a=0.535, q=1.81, feedback=None):
    return {
        "plant": {"A": [[1.0]], "B": [1.0], "G": [[1.0]], "a": a, "r": 1},
        "stabilizer": {"k": [-1.0], "P": [[1.0]], "lambda": 0.0},
        "certificate": {"c": 1.81, "phi": 0.0, "sigma": "auto"},
        "simulation": {"T": 100, "x0": [1.0], "y0": [0.0], "strategy": "zero", "seed": 1},
        "feedback": feedback or {"kind": "scalar_redesign", "q": q},
    }


def write_scenario(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestTable1Command:
    def test_csv_contents_and_determinism(self, tmp_path, capsys):
        out = tmp_path / "table.csv"
        t0 = time.monotonic()
        assert main(["table1", "-o", str(out)]) == 0
        elapsed = time.monotonic() - t0
        assert elapsed < 10.0
        text1 = out.read_bytes()
        lines = text1.decode().splitlines()
        assert lines[0] == "r,necessary,sufficient,c_star"
        assert lines[1].startswith("0,1.000000,1.000000")
        row7 = dict()
        for line in lines[1:]:
            parts = line.split(",")
            row7[int(parts[0])] = parts
        assert float(row7[7][2]) == pytest.approx(0.1144, abs=5e-4)
        assert float(row7[1][1]) == 0.5
        # rerun is byte-identical
        assert main(["table1", "-o", str(out)]) == 0
        assert out.read_bytes() == text1

    def test_stdout_output(self, capsys):
        assert main(["table1"]) == 0
        captured = capsys.readouterr().out
        assert captured.startswith("r,necessary,sufficient,c_star\n")
        assert len(captured.strip().splitlines()) == 14

    def test_unwritable_path(self, capsys):
        assert main(["table1", "-o", "/nonexistent-dir/t.csv"]) == 2

    def test_thread_env_does_not_change_output(self, tmp_path, capsys, monkeypatch):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("DELAYPRED_THREADS", "1")
        main(["table1", "-o", str(out1)])
        monkeypatch.setenv("DELAYPRED_THREADS", "4")
        main(["table1", "-o", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()


class TestBoundCommand:
    def test_single_stage(self, capsys):
        assert main(["bound", "--r", "1"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("necessary=0.500000 sufficient=0.500000")

    def test_zero_delay(self, capsys):
        assert main(["bound", "--r", "0"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("necessary=1.000000 sufficient=1.000000")

    def test_ten_stages(self, capsys):
        assert main(["bound", "--r", "10"]) == 0
        fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        assert float(fields["sufficient"]) == pytest.approx(0.0807, abs=5e-4)

    def test_negative_r_usage_error(self, capsys):
        assert main(["bound", "--r", "-1"]) == 2


class TestCertifyCommand:
    def test_benchmark_point_passes(self, tmp_path, capsys):
        path = write_scenario(tmp_path, scalar_scenario_dict())
        assert main(["certify", path, "--a", "0.535"]) == 0
        out = capsys.readouterr().out
        assert "pass=true" in out

    def test_overshoot_fails(self, tmp_path, capsys):
        path = write_scenario(tmp_path, scalar_scenario_dict())
        assert main(["certify", path, "--a", "0.9"]) == 1
        assert "pass=false" in capsys.readouterr().out

    def test_search_reports_at_least_example_level(self, tmp_path, capsys):
        path = write_scenario(tmp_path, scalar_scenario_dict())
        assert main(["certify", path, "--search", "1.0"]) == 0
        out = capsys.readouterr().out
        best = float(dict(kv.split("=") for kv in out.split())["largest_certified_a"])
        assert best >= 0.535

    def test_redesigned_harness(self, tmp_path, capsys):
        doc = scalar_scenario_dict(a=0.5, feedback="redesigned")
        path = write_scenario(tmp_path, doc)
        assert main(["certify", path, "--a", "0.5"]) == 0
        assert "pass=true" in capsys.readouterr().out

    def test_nominal_search_capped_near_half(self, tmp_path, capsys):
        doc = scalar_scenario_dict(a=0.5, feedback="nominal")
        doc["certificate"] = {"c": 2.0, "phi": 0.0, "sigma": "auto"}
        path = write_scenario(tmp_path, doc)
        assert main(["certify", path, "--search", "1.0"]) == 0
        out = capsys.readouterr().out
        best = float(dict(kv.split("=") for kv in out.split())["largest_certified_a"])
        assert best == pytest.approx(0.5, abs=0.01)

    def test_invalid_scenario_exit_2(self, tmp_path, capsys):
        doc = scalar_scenario_dict()
        del doc["plant"]["A"]
        path = write_scenario(tmp_path, doc)
        assert main(["certify", path, "--a", "0.5"]) == 2
        assert "plant.A" in capsys.readouterr().err

    def test_missing_file_exit_2(self, capsys):
        assert main(["certify", "/no/such/file.json", "--a", "0.5"]) == 2


class TestSimulateCommand:
    def test_constant_solution_scenario(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        assert main(["simulate", str(SCENARIOS / "constant_solution_r3.json"),
                     "-o", str(out)]) == 0
        summary = capsys.readouterr().out
        fields = dict(kv.split("=") for kv in summary.split())
        assert float(fields["decay_rate"]) == pytest.approx(1.0, abs=1e-12)
        assert fields["diverged"] == "false"
        rows = out.read_text().splitlines()[1:]
        xs = np.array([float(r.split(",")[1]) for r in rows])
        assert np.max(np.abs(xs - 1.0)) <= 1e-9

    def test_deadbeat_scenario_decay(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        assert main(["simulate", str(SCENARIOS / "nominal_deadbeat_r3.json"),
                     "-o", str(out)]) == 0
        fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        assert float(fields["decay_rate"]) <= 0.5 + 1e-9

    def test_zero_start_all_zero_rows(self, tmp_path, capsys):
        doc = scalar_scenario_dict(feedback="nominal")
        doc["simulation"]["x0"] = [0.0]
        path = write_scenario(tmp_path, doc)
        out = tmp_path / "zero.csv"
        assert main(["simulate", path, "-o", str(out)]) == 0
        for row in out.read_text().splitlines()[1:]:
            assert float(row.split(",")[1]) == 0.0

    def test_redesigned_policy_runs(self, tmp_path, capsys):
        doc = scalar_scenario_dict(a=0.5, feedback="redesigned")
        doc["simulation"]["strategy"] = "greedy_adversary"
        path = write_scenario(tmp_path, doc)
        out = tmp_path / "run.csv"
        assert main(["simulate", path, "-o", str(out)]) == 0
        fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
        assert float(fields["decay_rate"]) < 1.0

    def test_missing_simulation_block(self, tmp_path, capsys):
        doc = scalar_scenario_dict()
        del doc["simulation"]
        path = write_scenario(tmp_path, doc)
        assert main(["simulate", path, "-o", str(tmp_path / "x.csv")]) == 2


class TestScenarioParsing:
    def test_field_addressed_errors(self, tmp_path):
        doc = scalar_scenario_dict()
        del doc["stabilizer"]["P"]
        path = write_scenario(tmp_path, doc)
        with pytest.raises(ScenarioError, match="stabilizer.P"):
            parse_scenario(path)

    def test_json_syntax_error_carries_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"plant\": [,]\n}")
        with pytest.raises(ScenarioError, match="bad.json:2"):
            parse_scenario(path.as_posix())

    def test_infeasible_lambda_detected(self, tmp_path):
        doc = scalar_scenario_dict()
        doc["plant"]["a"] = 0.1
        doc["stabilizer"]["k"] = [0.5]   # closed loop 1.5, not a contraction
        doc["stabilizer"]["lambda"] = 0.5
        path = write_scenario(tmp_path, doc)
        with pytest.raises(ScenarioError, match="infeasible"):
            parse_scenario(path)

    def test_auto_validate_lambda(self, tmp_path):
        doc = scalar_scenario_dict()
        doc["stabilizer"]["lambda"] = "auto-validate"
        path = write_scenario(tmp_path, doc)
        sc = parse_scenario(path)
        assert sc.stab.lam == pytest.approx(0.0, abs=1e-12)

    def test_scalar_redesign_needs_scalar_plant(self, tmp_path):
        doc = scalar_scenario_dict()
        doc["plant"]["r"] = 2
        doc["simulation"]["y0"] = [0.0, 0.0]
        path = write_scenario(tmp_path, doc)
        with pytest.raises(ScenarioError, match="scalar_redesign"):
            parse_scenario(path)

    def test_bad_strategy_rejected(self, tmp_path):
        doc = scalar_scenario_dict(feedback="nominal")
        doc["simulation"]["strategy"] = {"kind": "sinusoid"}
        path = write_scenario(tmp_path, doc)
        out = "/tmp/never-written.csv"
        assert main(["simulate", path, "-o", out]) == 2
