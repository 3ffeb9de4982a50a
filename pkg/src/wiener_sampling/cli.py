"""Command-line entry point: ``wiener-sampling {solve,simulate,regret,validate}``.

Exit codes: 0 success, 1 bad arguments, 2 solver failure or failed
validation, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .analytic import AnalyticContext, IntegrationError
from .checks import run_all
from .delays import DelayModel, parse_delay
from .policies import parse_policy
from .simulate import (
    ESTIMATORS,
    N_CHECKPOINTS,
    checkpoint_index,
    regret_series,
    run_replications,
    summarize,
    summary_json,
)
from .solver import SolverError, solve

EXIT_OK, EXIT_PARSE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
RESIDUAL_TOL = 1e-9

LOGNORMAL = "lognormal:0.8,1.2"
PRESETS = {
    "fig3": [
        {"delay": LOGNORMAL, "policy": p, "frames": 50_000, "reps": 20}
        for p in ("online", "optimal", "zerowait")
    ],
    "fig4": [{"delay": LOGNORMAL, "policy": "online", "frames": 50_000, "reps": 20}],
    "fig5": [
        {"delay": LOGNORMAL, "policy": "online", "frames": 50_000, "reps": 20, "fmax": "auto10", "V": v}
        for v in (1.0, 10.0)
    ],
}
# the interval figure comes from the same runs as the MSE figure
PRESETS["fig6"] = PRESETS["fig5"]


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


@dataclass(frozen=True)
class ExperimentConfig:
    delay: str = "det:1"
    policy: str = "online"
    frames: int = 10_000
    reps: int = 20
    seed: int = 1
    alpha: float = 1.0
    dlb: float | None = None
    fmax: str = "inf"
    V: float = 1.0
    step: float | None = None
    out: str | None = None
    format: str = "csv"
    checkpoints: int = N_CHECKPOINTS
    workers: int = 1

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0.5, 1]")
        if self.reps < 1 or self.frames < 1:
            raise ValueError("reps and frames must be >= 1")
        if not self.V > 0:
            raise ValueError("V must be positive")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.dlb is not None and not self.dlb > 0:
            raise ValueError("dlb must be positive")
        if self.checkpoints < 2 or self.workers < 1:
            raise ValueError("checkpoints must be >= 2 and workers >= 1")
        parse_fmax(self.fmax, 1.0)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    def model(self) -> DelayModel:
        return parse_delay(self.delay, dlb=self.dlb)

    def f_max(self, model: DelayModel) -> float:
        return parse_fmax(self.fmax, model.mean)

    @property
    def label(self) -> str:
        tag = self.policy.replace(":", "-")
        if self.policy == "online" and not math.isinf(parse_fmax(self.fmax, 1.0)):
            tag += f"_V{self.V:g}"
        return tag


def parse_fmax(text: str, mean_delay: float) -> float:
    """``inf``, ``auto10`` (one sample per ten mean delays) or a positive number."""
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "none"):
        return math.inf
    if t == "auto10":
        if not mean_delay > 0:
            raise ValueError("auto10 needs a positive mean delay")
        return 1.0 / (10.0 * mean_delay)
    try:
        v = float(t)
    except ValueError as exc:
        raise ValueError(f"bad --fmax {text!r}") from exc
    if not v > 0:
        raise ValueError("--fmax must be positive")
    return v


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wiener-sampling", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=True):
        sp.add_argument("--delay", help="det:d | uniform:a,b | lognormal:mu,sigma | lecam:delta,c,k | empirical:path")
        sp.add_argument("--dlb", type=float, help="lower bound on the mean delay used by the step size")
        sp.add_argument("--fmax", help="maximum sampling rate: number | inf | auto10")
        sp.add_argument("--out", help="output directory (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        if not sim:
            return
        sp.add_argument("--policy", help="online | optimal | zerowait | const:w")
        sp.add_argument("--frames", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--V", type=float)
        sp.add_argument("--step", type=float, help="cap on the waiting-time Euler step")
        sp.add_argument("--checkpoints", type=int)
        sp.add_argument("--workers", type=int, help="replication threads")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--config", help="ExperimentConfig JSON file; flags override it")

    common(sub.add_parser("solve", help="offline optimal threshold as JSON"), sim=False)
    common(sub.add_parser("simulate", help="per-replication CSVs and a JSON summary"))
    rp = sub.add_parser("regret", help="replication-averaged regret series")
    common(rp)
    rp.add_argument("--estimator", choices=ESTIMATORS, default="conditional")
    vp = sub.add_parser("validate", help="run the invariant suite")
    vp.add_argument("--delay", default="det:1")
    vp.add_argument("--dlb", type=float)
    vp.add_argument("--fmax", default="inf")
    vp.add_argument("--frames", type=int, default=2 * 10**5)
    vp.add_argument("--seed", type=int, default=1)
    vp.add_argument("--out")
    return p


def _overrides(ns) -> dict:
    keys = {f.name for f in fields(ExperimentConfig)}
    return {k: v for k, v in vars(ns).items() if k in keys and v is not None}


def build_configs(ns) -> list[ExperimentConfig]:
    base: dict = {}
    if getattr(ns, "config", None):
        base = asdict(ExperimentConfig.from_json(Path(ns.config).read_text()))
    over = _overrides(ns)
    runs = PRESETS[ns.preset] if getattr(ns, "preset", None) else [{}]
    return [ExperimentConfig(**{**base, **run, **over}) for run in runs]


def _solve(model: DelayModel, f_max: float):
    try:
        return solve(AnalyticContext(model), f_max)
    except (SolverError, IntegrationError) as exc:
        raise CliError(f"solver failed: {exc}", EXIT_SOLVER) from exc


def _policy(cfg: ExperimentConfig, model: DelayModel, sol):
    f_max = cfg.f_max(model)
    kw = {"V": cfg.V, "alpha": cfg.alpha, "dlb": model.mean_lower_bound, "f_max": f_max}
    return parse_policy(cfg.policy, sol, **kw)


def _record(cfg: ExperimentConfig) -> np.ndarray:
    return checkpoint_index(cfg.frames, points=cfg.checkpoints)


def _run(cfg: ExperimentConfig):
    model = cfg.model()
    sol = _solve(model, cfg.f_max(model))
    policy = _policy(cfg, model, sol)
    kw = {"record": _record(cfg)}
    if cfg.step is not None:
        kw["step_cap"] = cfg.step
    traces = run_replications(model, policy, cfg.frames, cfg.reps, cfg.seed, workers=cfg.workers, **kw)
    return model, sol, traces


def _public_config(cfg: ExperimentConfig) -> dict:
    """Config as recorded in outputs; where and how fast it ran is left out
    so that outputs do not depend on it."""
    d = json.loads(cfg.to_json())
    for k in ("out", "workers"):
        d.pop(k)
    return d


def _emit(out: str | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {name}: {exc}", EXIT_IO) from exc


def cmd_solve(ns) -> int:
    model = parse_delay(ns.delay or "det:1", dlb=ns.dlb)
    sol = _solve(model, parse_fmax(ns.fmax or "inf", model.mean))
    _emit(ns.out, "solution.json", sol.to_json())
    lim = RESIDUAL_TOL * max(1.0, model.second_moment)
    return EXIT_OK if sol.residual <= lim else EXIT_SOLVER


def cmd_simulate(ns) -> int:
    for cfg in build_configs(ns):
        _, sol, traces = _run(cfg)
        summary = summarize(traces, sol)
        summary["config"] = _public_config(cfg)
        _emit(cfg.out, f"{cfg.label}_summary.json", summary_json(summary))
        if cfg.format == "csv" and cfg.out is not None:
            for t in traces:
                _emit(cfg.out, f"{cfg.label}_rep{t.replication:03d}.csv", t.csv_text(sol.mse_opt))
    return EXIT_OK


def cmd_regret(ns) -> int:
    for cfg in build_configs(ns):
        _, sol, traces = _run(cfg)
        reg = regret_series(traces, sol, ns.estimator)
        if cfg.format == "json":
            body = json.dumps({"k": reg.k.tolist(), "regret": reg.regret.tolist(), "se": reg.se.tolist(),
                               "mse_opt": reg.mse_opt, "estimator": ns.estimator,
                               "config": _public_config(cfg)}, indent=1, sort_keys=True)
            name = f"{cfg.label}_regret.json"
        else:
            rows = ["k,regret,se"] + [f"{k},{r!r},{s!r}" for k, r, s in zip(reg.k.tolist(), reg.regret.tolist(), reg.se.tolist())]
            body = "\n".join(rows) + "\n"
            name = f"{cfg.label}_regret.csv"
        _emit(cfg.out, name, body)
    return EXIT_OK


def cmd_validate(ns) -> int:
    model = parse_delay(ns.delay, dlb=ns.dlb)
    t0 = time.perf_counter()
    try:
        checks = run_all(model, frames=ns.frames, seed=ns.seed, f_max=parse_fmax(ns.fmax, model.mean))
    except (SolverError, IntegrationError) as exc:
        raise CliError(f"solver failed: {exc}", EXIT_SOLVER) from exc
    ok = all(c.passed for c in checks)
    report = {"delay": model.spec(), "passed": ok, "seconds": round(time.perf_counter() - t0, 3),
              "checks": [c.as_dict() for c in checks]}
    _emit(ns.out, "validate.json", json.dumps(report, indent=1))
    return EXIT_OK if ok else EXIT_SOLVER


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "regret": cmd_regret, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    try:
        return COMMANDS[ns.command](ns)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
