import json
import time

import pytest

from wiener_sampling.cli import PRESETS, ExperimentConfig, build_configs, main, parse_fmax, _parser


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_stdout(capsys):
    code, out, _ = run(capsys, "solve", "--delay", "uniform:0,1")
    assert code == 0
    d = json.loads(out)
    assert d["gamma_star"] == pytest.approx(0.2419825339, rel=1e-8)
    assert d["nu_star"] == 0.0


def test_solve_constrained(capsys):
    code, out, _ = run(capsys, "solve", "--delay", "lognormal:0.8,1.2", "--fmax", "auto10")
    assert code == 0
    d = json.loads(out)
    assert d["frame_length_star"] == pytest.approx(45.72225, rel=1e-6)


def test_solve_writes_file(tmp_path, capsys):
    assert run(capsys, "solve", "--delay", "det:1", "--out", str(tmp_path))[0] == 0
    assert json.loads((tmp_path / "solution.json").read_text())["tau_star"] > 0


@pytest.mark.parametrize("argv", [
    ["solve", "--delay", "weibull:1,2"],
    ["solve", "--fmax", "-1"],
    ["simulate", "--alpha", "0.4"],
    ["simulate", "--policy", "bogus", "--frames", "5", "--reps", "1"],
    ["frobnicate"],
    [],
])
def test_parse_errors(capsys, argv):
    assert main(argv) == 1


def test_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(capsys, "solve", "--out", str(blocker / "sub"))[0] == 3


def test_parse_fmax():
    assert parse_fmax("inf", 1.0) == float("inf")
    assert parse_fmax("auto10", 2.0) == pytest.approx(0.05)
    assert parse_fmax("0.5", 1.0) == 0.5
    for bad in ("0", "abc"):
        with pytest.raises(ValueError):
            parse_fmax(bad, 1.0)


def test_config_roundtrip():
    cfg = ExperimentConfig(delay="uniform:0,1", policy="optimal", frames=123, V=2.5, fmax="auto10", step=0.01)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()
    with pytest.raises(ValueError):
        ExperimentConfig.from_json('{"nope": 1}')


def test_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(ExperimentConfig(frames=7, seed=3).to_json())
    ns = _parser().parse_args(["simulate", "--config", str(path), "--seed", "9"])
    (cfg,) = build_configs(ns)
    assert cfg.frames == 7 and cfg.seed == 9
    ns = _parser().parse_args(["simulate", "--preset", "fig5", "--frames", "10"])
    cfgs = build_configs(ns)
    assert [c.V for c in cfgs] == [1.0, 10.0] and all(c.frames == 10 for c in cfgs)
    assert cfgs[1].label == "online_V10"


def test_presets_parse():
    for name, runs in PRESETS.items():
        for r in runs:
            cfg = ExperimentConfig(**r)
            cfg.model()
            assert cfg.f_max(cfg.model()) > 0


def _simulate(tmp_path, capsys, name, *extra):
    out = tmp_path / name
    argv = ["simulate", "--delay", "uniform:0,1", "--frames", "300", "--reps", "3", "--seed", "4",
            "--out", str(out), *extra]
    assert run(capsys, *argv)[0] == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_simulate_outputs_deterministic(tmp_path, capsys):
    a = _simulate(tmp_path, capsys, "a")
    b = _simulate(tmp_path, capsys, "b")
    c = _simulate(tmp_path, capsys, "c", "--workers", "3")
    assert set(a) == {"online_summary.json", "online_rep000.csv", "online_rep001.csv", "online_rep002.csv"}
    assert a == b == c
    d = _simulate(tmp_path, capsys, "d", "--seed", "5")
    assert d["online_rep000.csv"] != a["online_rep000.csv"]


def test_simulate_stdout_summary(capsys):
    code, out, _ = run(capsys, "simulate", "--delay", "det:1", "--policy", "zerowait", "--frames", "50", "--reps", "2")
    assert code == 0
    s = json.loads(out)
    assert s["timeavg_mse"]["mean"][-1] == pytest.approx(1.5, abs=0.5)
    assert s["config"]["policy"] == "zerowait" and "out" not in s["config"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_regret(capsys, fmt):
    code, out, _ = run(capsys, "regret", "--delay", "det:1", "--frames", "100", "--reps", "3",
                       "--format", fmt, "--estimator", "mart")
    assert code == 0
    if fmt == "json":
        d = json.loads(out)
        assert len(d["k"]) == 100 and d["estimator"] == "mart"
    else:
        lines = out.splitlines()
        assert lines[0] == "k,regret,se" and len(lines) == 101


def test_validate(capsys):
    t0 = time.perf_counter()
    code, out, _ = run(capsys, "validate", "--delay", "det:1")
    assert time.perf_counter() - t0 < 120
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert all(c["passed"] for c in rep["checks"])
    names = {c["name"] for c in rep["checks"]}
    assert {"wald_identity", "stopping_identity", "g0_strong_monotone", "precision_warning_surfaced"} <= names
