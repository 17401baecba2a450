import json

import numpy as np
import pytest

from hyperlap.cli import build_parser, format_duration, run
from hyperlap.config import Config
from hyperlap.errors import BadInput
from hyperlap.reporters import Reporter, dumps_json, read_trajectory_csv
from hyperlap.utils import calculate_sha256

SINGLE_EDGE = {"n": 2, "m": 0, "edges": [{"v": [1, 2], "w": 1.0}]}
FIVE_VERTEX = {
    "n": 3,
    "m": 2,
    "edges": [{"v": [1, 2, 4], "w": 1.0}, {"v": [2, 3, 5], "w": 0.5}],
}


def _control_problem(steps=20, max_iters=30):
    t = np.linspace(0.0, 1.0, steps + 1)
    a = np.stack([0.1 * np.sin(2 * np.pi * t), 0.05 * np.cos(np.pi * t)], axis=1)
    return {
        "graph": "G.json",
        "p": 4,
        "q": 4,
        "lambda": 0.01,
        "T": 1.0,
        "steps": steps,
        "a": a.tolist(),
        "M": 10.0,
        "opt": {"max_iters": max_iters},
    }


def test_validate_prints_summary(write_json, capsys):
    path = write_json("G.json", FIVE_VERTEX)
    assert run(["validate", path]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["N"] == 5
    assert info["connected"] is True
    assert info["diameter"] == 2
    assert info["nu_E"] == 3


def test_validate_reports_tagged_error(write_json, capsys):
    path = write_json("bad.json", {"n": 2, "m": 0, "edges": [{"v": [1], "w": 1.0}]})
    assert run(["validate", path]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("hypergraph/EdgeTooSmall: ")


def test_missing_file_is_bad_input(tmp_path, capsys):
    assert run(["validate", str(tmp_path / "missing.json")]) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("cli/BadInput: ")


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["energy", "G.json"],
        ["energy", "G.json", "--p", "2", "--q", "abc", "--x", "[1, 0]"],
        ["simulate", "problem.json", "--scheme", "explicit"],
    ],
)
def test_usage_errors(argv):
    assert run(argv) == 2


def test_energy_stdout(write_json, capsys):
    path = write_json("G.json", SINGLE_EDGE)
    assert run(["energy", path, "--p", "2", "--q", "2", "--x", "[1, 0]"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["q"] == "2"
    assert out["phi_p"] == pytest.approx(0.5)
    assert out["phi_pq"] == pytest.approx(0.5)
    assert out["subgradient"] == pytest.approx([1.0, -1.0])
    assert out["grad_phi_pq"] == pytest.approx([1.0, -1.0])

    assert run(["energy", path, "--p", "2", "--x", "[1, 0]"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["q"] == "inf"
    assert "grad_phi_pq" not in out


@pytest.mark.parametrize("scheme", ["penalized", "constrained", "free"])
def test_simulate_zero_instance(write_json, tmp_path, scheme):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", {"graph": "G.json", "p": 2, "q": 2, "lambda": 0.1, "T": 1.0, "steps": 4})
    out_dir = tmp_path / "out"
    assert run(["simulate", problem, "--scheme", scheme, "--out-dir", str(out_dir)]) == 0

    times, states = read_trajectory_csv(out_dir / "trajectory.csv")
    assert np.allclose(times, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert states.shape == (5, 5)
    assert np.allclose(states, 0.0, atol=1e-12)

    report = json.loads((out_dir / "simulate.json").read_text(encoding="utf-8"))
    assert report["input_sha256"] == calculate_sha256(problem)
    assert report["mean_drift"] <= 1e-12
    assert ("constraint_violation" in report) == (scheme != "free")
    assert (out_dir / "run_summary.txt").exists()
    assert (out_dir / "LOGS" / "run.log").exists()


def test_simulate_overrides(write_json, tmp_path):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", {"graph": "G.json", "p": 2, "q": 2, "lambda": 0.1, "T": 1.0, "steps": 4})
    out_dir = tmp_path / "out"
    assert run(["simulate", problem, "--steps", "8", "--q", "4", "--out-dir", str(out_dir)]) == 0
    report = json.loads((out_dir / "simulate.json").read_text(encoding="utf-8"))
    assert report["steps"] == 8
    assert report["q"] == "4"


def test_verify_is_deterministic(write_json, tmp_path, capsys):
    graph = write_json("G.json", FIVE_VERTEX)
    outputs = []
    codes = []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        codes.append(run(["verify", graph, "--p", "4", "--q", "4", "--seed", "7", "--samples", "3", "--out-dir", str(out_dir)]))
        outputs.append((out_dir / "verify.json").read_bytes())
    assert codes[0] == codes[1]
    assert codes[0] in (0, 1)
    assert outputs[0] == outputs[1]

    report = json.loads(outputs[0])
    assert report["seed"] == 7
    assert report["samples"] == 3
    assert {c["status"] for c in report["checks"]} <= {"PASS", "FAIL", "SKIP"}
    assert "PASS" in capsys.readouterr().out


def test_control_writes_outputs(write_json, tmp_path):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", _control_problem())
    out_dir = tmp_path / "out"
    assert run(["control", problem, "--out-dir", str(out_dir)]) == 0

    result = json.loads((out_dir / "result.json").read_text(encoding="utf-8"))
    for key in ("cost_Jql", "cost_J", "residual", "budget_usage", "iterations", "converged", "certificate_checked"):
        assert key in result
    assert np.all(np.diff(result["cost_history"]) <= 0.0)
    assert result["budget"] <= 10.0

    header = (out_dir / "control.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "t,a1,a2,a3,a4,a5"
    times, gamma = read_trajectory_csv(out_dir / "adjoint.csv")
    assert gamma.shape == (21, 5)


def test_control_requires_budget(write_json, tmp_path, capsys):
    write_json("G.json", FIVE_VERTEX)
    raw = _control_problem()
    del raw["M"]
    problem = write_json("problem.json", raw)
    assert run(["control", problem, "--out-dir", str(tmp_path / "out")]) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("cli/BadInput: ")


def test_sweep_mismatched_lists(write_json, tmp_path, capsys):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", _control_problem())
    argv = ["sweep", problem, "--q-list", "4", "8", "--lambda-list", "0.1", "--out-dir", str(tmp_path / "out")]
    assert run(argv) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("control/InvalidSweep: ")


def test_sweep_writes_stages(write_json, tmp_path):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", _control_problem(steps=10, max_iters=10))
    out_dir = tmp_path / "out"
    argv = ["sweep", problem, "--q-list", "4", "8", "--lambda-list", "0.1", "0.01", "--out-dir", str(out_dir)]
    assert run(argv) == 0

    for name in ("q4_lambda0.1", "q8_lambda0.01"):
        stage = json.loads((out_dir / name / "result.json").read_text(encoding="utf-8"))
        assert stage["cost_original"] >= 0.0
        assert (out_dir / name / "control.csv").exists()
    summary = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
    assert [s["stage"] for s in summary["stages"]] == ["q4_lambda0.1", "q8_lambda0.01"]
    assert len(summary["distances"]) == 1
    assert (out_dir / "sweep_report.xlsx").exists()


def test_spectral_writes_report(write_json, tmp_path):
    graph = write_json("G.json", SINGLE_EDGE)
    out_dir = tmp_path / "out"
    assert run(["spectral", graph, "--p", "2", "--q", "2", "--lambda", "0.5", "--restarts", "2", "--out-dir", str(out_dir)]) == 0
    report = json.loads((out_dir / "spectral.json").read_text(encoding="utf-8"))
    assert abs(report["lambda1q"] - 2.0) <= 1e-8
    assert report["gamma"] == pytest.approx(0.25)
    assert report["Gamma"] == pytest.approx(8.0)
    assert report["restarts"] == 2


def test_config_file_and_overrides(write_json, tmp_path):
    graph = write_json("G.json", SINGLE_EDGE)
    out_dir = tmp_path / "from_config"
    config_path = tmp_path / "config.yaml"
    config_path.write_text(f"out_dir: {out_dir}\nseed: 3\nverify:\n  samples: 2\n", encoding="utf-8")
    run(["verify", graph, "--p", "2", "--q", "2", "--config", str(config_path)])
    report = json.loads((out_dir / "verify.json").read_text(encoding="utf-8"))
    assert report["seed"] == 3
    assert report["samples"] == 2


def test_invalid_config(tmp_path, write_json, capsys):
    graph = write_json("G.json", SINGLE_EDGE)
    config_path = tmp_path / "config.yaml"
    config_path.write_text("seed: -1\n", encoding="utf-8")
    assert run(["validate", graph, "--config", str(config_path)]) == 1
    assert capsys.readouterr().err.startswith("cli/BadInput: ")
    assert run(["validate", graph, "--config", str(tmp_path / "missing.yaml")]) == 1


def test_config_merge_args():
    config = Config()
    config.load_from_dict({"seed": 5, "optimizer": {"tol": 1e-4}, "reports": {"xlsx": False}})
    args = build_parser().parse_args(["control", "problem.json", "--seed", "9", "--tol", "1e-3"])
    config.merge_args(args)
    config.validate()
    assert config.seed == 9
    assert config.optimizer_options().tol == 1e-3
    assert config.reports_xlsx is False
    assert "seed=9" in repr(config)

    config.opt_backtrack = 1.5
    with pytest.raises(ValueError):
        config.validate()


def test_reporter_files(tmp_path):
    reporter = Reporter(str(tmp_path / "r"))
    reporter.write_json("a.json", {"b": float("inf"), "a": np.float64(1.5), "v": np.array([1, 2])})
    data = json.loads((tmp_path / "r" / "a.json").read_text(encoding="utf-8"))
    assert data == {"a": 1.5, "b": "inf", "v": [1, 2]}
    assert dumps_json({"z": 1, "a": 2}).index('"a"') < dumps_json({"z": 1, "a": 2}).index('"z"')

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n", encoding="utf-8")
    with pytest.raises(BadInput):
        read_trajectory_csv(bad)


def test_format_duration():
    assert format_duration(2.5) == "2.5s"
    assert format_duration(75) == "1m 15s"
    assert format_duration(3725) == "1h 2m 5s"


def test_config_numbers_written_as_strings(write_json, tmp_path, capsys):
    graph = write_json("G.json", SINGLE_EDGE)
    config_path = tmp_path / "config.yaml"
    # YAML 1.1 reads exponents without a dot as strings
    config_path.write_text("newton_tol: 1e-10\noptimizer:\n  tol: 1e-4\n", encoding="utf-8")
    config = Config()
    config.load_from_file(str(config_path))
    assert config.newton_tol == "1e-10"
    config.validate()
    assert config.newton_tol == 1e-10
    assert config.optimizer_options().tol == 1e-4

    config_path.write_text("optimizer:\n  tol: abc\n", encoding="utf-8")
    assert run(["validate", graph, "--config", str(config_path)]) == 1
    assert capsys.readouterr().err.startswith("cli/BadInput: opt_tol must be a number")
    config_path.write_text("eigen:\n  restarts: 2.5\n", encoding="utf-8")
    assert run(["validate", graph, "--config", str(config_path)]) == 1


def test_penalized_needs_finite_q(write_json, tmp_path, capsys):
    write_json("G.json", FIVE_VERTEX)
    problem = write_json("problem.json", {"graph": "G.json", "p": 2, "lambda": 0.1, "T": 1.0, "steps": 4})
    out_dir = tmp_path / "out"
    assert run(["simulate", problem, "--scheme", "penalized", "--out-dir", str(out_dir)]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("cli/BadInput: the penalized scheme needs a finite 'q'")

    assert run(["simulate", problem, "--scheme", "constrained", "--out-dir", str(out_dir)]) == 0
    assert run(["simulate", problem, "--scheme", "penalized", "--q", "2", "--out-dir", str(out_dir)]) == 0

    raw = _control_problem()
    del raw["q"]
    control_problem = write_json("control.json", raw)
    assert run(["control", control_problem, "--out-dir", str(out_dir)]) == 1
    assert "optimal control needs a finite 'q'" in capsys.readouterr().err
