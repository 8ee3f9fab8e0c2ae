import csv
import json

import numpy as np
import pytest

from proxmax.cli import (
    ConfigError,
    exit_code_for,
    load_config,
    main,
    parse_config,
    run,
    verify,
)


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=1))
    return path


def _read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# config parsing


def test_minimal_config_defaults():
    cfg = parse_config({"problem": "paper_example"})
    assert cfg.lam == "auto"
    assert cfg.lambda_bar == 1e6
    assert cfg.outer_tol == 1e-8
    assert cfg.inner_tol == 1e-10
    assert cfg.max_outer == 10_000
    assert cfg.max_inner == 1_000
    assert cfg.seed == 42
    assert cfg.start_point is None
    assert cfg.level_ref is None


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="bogus_key"):
        parse_config({"problem": "abs", "bogus_key": 1})


def test_missing_problem_rejected():
    with pytest.raises(ConfigError, match="problem"):
        parse_config({})


def test_bad_field_values_name_the_field():
    with pytest.raises(ConfigError, match="outer_tol"):
        parse_config({"problem": "abs", "outer_tol": -1.0})
    with pytest.raises(ConfigError, match="lambda"):
        parse_config({"problem": "abs", "lambda": "fast"})
    with pytest.raises(ConfigError, match="lambda"):
        parse_config({"problem": "abs", "lambda": -2})
    with pytest.raises(ConfigError, match="max_outer"):
        parse_config({"problem": "abs", "max_outer": 0})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"problem": "abs", "seed": 1.5})
    with pytest.raises(ConfigError, match="start_point"):
        parse_config({"problem": "abs", "start_point": []})
    with pytest.raises(ConfigError, match="start_point"):
        parse_config({"problem": "abs", "start_point": ["x"]})


def test_load_config_reports_json_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "problem": "abs",\n  oops\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_wrong_start_dimension_rejected(tmp_path):
    cfg = parse_config({"problem": "abs", "start_point": [1.0, 2.0]})
    with pytest.raises(ConfigError, match="start_point"):
        run(cfg, out_dir=tmp_path / "o")


# run artifacts


def test_run_writes_consistent_artifacts(tmp_path):
    cfg = parse_config({"problem": "paper_example"})
    summary = run(cfg, out_dir=tmp_path / "out")
    assert exit_code_for(summary) == 0
    assert summary.termination.kind == "stationary"

    rows = _read_trace(tmp_path / "out" / "trace.csv")
    assert rows, "trace must contain at least one row"
    assert list(rows[0]) == [
        "k",
        "x0",
        "f",
        "step_dist",
        "residual",
        "lambda",
        "inner_iters",
        "subgrad_norm",
    ]
    with open(tmp_path / "out" / "summary.json") as fh:
        data = json.load(fh)
    last = rows[-1]
    assert float(last["f"]) == data["final_f"]
    assert float(last["x0"]) == data["final_point"][0]
    assert float(last["residual"]) == data["final_residual"]
    assert int(last["k"]) == data["iterations"] - 1
    assert data["final_point"][0] == pytest.approx(1.0, abs=1e-6)
    assert data["lipschitz_estimate"] > 0
    assert data["settings"]["lambda"] == "auto"


def test_run_abs_walks_integers(tmp_path):
    cfg = parse_config({"problem": "abs", "lambda": 1.0})
    run(cfg, out_dir=tmp_path / "out")
    rows = _read_trace(tmp_path / "out" / "trace.csv")
    xs = [float(r["x0"]) for r in rows]
    np.testing.assert_allclose(xs, [4.0, 3.0, 2.0, 1.0, 0.0, 0.0], atol=1e-8)


def test_run_is_byte_deterministic(tmp_path):
    cfg = parse_config({"problem": "paper_example", "seed": 7})
    run(cfg, out_dir=tmp_path / "a")
    run(cfg, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b
    assert b"\r" not in a


def test_run_max_outer_exit_code(tmp_path):
    cfg = parse_config({"problem": "quadratic", "lambda": 1.0, "max_outer": 3})
    summary = run(cfg, out_dir=tmp_path / "out")
    assert summary.termination.kind == "max_iters"
    assert exit_code_for(summary) == 2


def test_run_honors_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PROXMAX_OUTPUT_ROOT", str(tmp_path / "root"))
    code = main(["run", "--config", str(_write(tmp_path, "r.json", {"problem": "abs"}))])
    assert code == 0
    assert (tmp_path / "root" / "r" / "trace.csv").exists()


def test_run_respects_config_output_dir(tmp_path):
    target = tmp_path / "placed"
    cfg_path = _write(tmp_path, "r.json", {"problem": "abs", "output_dir": str(target)})
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert (target / "summary.json").exists()


# command line entry


def test_main_run_and_errors(tmp_path):
    good = _write(tmp_path, "good.json", {"problem": "paper_example"})
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "o1")]) == 0

    bad = _write(tmp_path, "bad.json", {"problem": "nope"})
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o2")]) == 1

    unknown = _write(tmp_path, "unk.json", {"problem": "abs", "zzz": 1})
    assert main(["run", "--config", str(unknown), "--out", str(tmp_path / "o3")]) == 1

    low = _write(tmp_path, "low.json", {"problem": "paper_example", "lambda": 0.17})
    assert main(["run", "--config", str(low), "--out", str(tmp_path / "o4")]) == 1


def test_main_capped_run_returns_two(tmp_path):
    capped = _write(
        tmp_path, "cap.json", {"problem": "quadratic", "lambda": 1.0, "max_outer": 2}
    )
    assert main(["run", "--config", str(capped), "--out", str(tmp_path / "o")]) == 2


def test_verify_passes_and_writes_report(tmp_path):
    cfg = parse_config({"problem": "paper_example"})
    code = verify(cfg, out_dir=tmp_path / "v")
    assert code == 0
    with open(tmp_path / "v" / "verify.json") as fh:
        report = json.load(fh)
    assert report["passed"] is True
    names = {c["name"] for c in report["checks"]}
    assert {
        "geometry_roundtrip",
        "fd_gradient",
        "strong_convexity",
        "sum_rule",
        "usc_sampler",
        "prox_vs_grid",
        "dist_convexity",
        "subgrad_floor",
    } <= names
    assert all(c["passed"] for c in report["checks"])


def test_verify_flags_weight_below_curvature(tmp_path):
    cfg = parse_config({"problem": "paper_example", "lambda": 0.17})
    code = verify(cfg, out_dir=tmp_path / "v")
    assert code == 3
    with open(tmp_path / "v" / "verify.json") as fh:
        report = json.load(fh)
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert "strong_convexity" in failed


def test_sweep_runs_each_config(tmp_path):
    configs = tmp_path / "configs"
    configs.mkdir()
    _write(configs, "one.json", {"problem": "abs", "lambda": 1.0})
    _write(configs, "two.json", {"problem": "quadratic", "lambda": 1.0})
    out = tmp_path / "sweeps"
    code = main(["sweep", "--configs", str(configs), "--out", str(out)])
    assert code == 0
    assert (out / "one" / "trace.csv").exists()
    assert (out / "two" / "summary.json").exists()
    with open(out / "sweep_summary.json") as fh:
        index = json.load(fh)
    assert [e["config"] for e in index] == ["one", "two"]
    assert all(e["exit_code"] == 0 for e in index)


def test_sweep_propagates_worst_exit(tmp_path):
    configs = tmp_path / "configs"
    configs.mkdir()
    _write(configs, "ok.json", {"problem": "abs", "lambda": 1.0})
    _write(configs, "bad.json", {"problem": "nope"})
    assert main(["sweep", "--configs", str(configs), "--out", str(tmp_path / "s")]) == 1
    assert main(["sweep", "--configs", str(tmp_path / "empty"), "--out", str(tmp_path)]) == 1
