"""Structural and statistical invariants, each returning a :class:`Check`.

These back the ``validate`` subcommand.  Analytic checks are exact up to
the stated tolerance; simulation checks compare a sample mean with its
target at ``z_max`` standard errors.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .analytic import (
    AnalyticContext,
    expected_frame_length,
    expected_frame_quartic,
    g_bar,
    gamma_bracket,
    threshold_cost,
)
from .delays import DelayModel
from .kernels import PrecisionWarning, RngStream, first_exit_after_delay, simulate_frames
from .policies import ConstantWaitPolicy, ThresholdPolicy
from .simulate import run_trace
from .solver import OptimalSolution, solve

GRID = 100
CURVATURE_TOL = 1e-3
DERIV_RTOL = 1e-4
ASSEMBLY_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "limit", float(self.limit))

    def as_dict(self) -> dict:
        return asdict(self)


def _grid(model: DelayModel, n: int = GRID) -> np.ndarray:
    lo, hi = gamma_bracket(model)
    return np.linspace(lo, hi, n)


def _fd_step(gamma: float) -> float:
    return 1e-4 * max(gamma, 1e-3)


def g0_monotone(ctx: AnalyticContext) -> Check:
    """Central-difference slope of ``g_bar_0`` is negative across the bracket."""
    worst = -math.inf
    for g in _grid(ctx.delay):
        h = _fd_step(g)
        d = (g_bar(ctx, g + h) - g_bar(ctx, g - h)) / (2 * h)
        worst = max(worst, d)
    return Check("g0_monotone_decreasing", worst < 0, worst, 0.0, ctx.delay.spec())


def g0_curvature(ctx: AnalyticContext, tol: float = CURVATURE_TOL) -> Check:
    """Second differences lie in ``[-3 - tol, tol]`` (concave, bounded curvature)."""
    lo_c, hi_c = math.inf, -math.inf
    for g in _grid(ctx.delay):
        h = 1e-3 * max(g, 1e-2)
        c = (g_bar(ctx, g + h) - 2 * g_bar(ctx, g) + g_bar(ctx, g - h)) / (h * h)
        lo_c, hi_c = min(lo_c, c), max(hi_c, c)
    ok = lo_c >= -3 - tol and hi_c <= tol
    return Check("g0_concave_curvature_band", ok, hi_c, tol,
                 f"{ctx.delay.spec()}: second differences in [{lo_c:.6g}, {hi_c:.6g}]")


def g0_derivative_identity(ctx: AnalyticContext, rtol: float = DERIV_RTOL) -> Check:
    """Slope of ``g_bar_0`` at ``gamma`` equals ``-l(3 gamma)``."""
    worst = 0.0
    for g in _grid(ctx.delay):
        h = _fd_step(g)
        d = (g_bar(ctx, g + h) - g_bar(ctx, g - h)) / (2 * h)
        want = -expected_frame_length(ctx, 3 * g)
        worst = max(worst, abs(d - want) / abs(want))
    return Check("g0_derivative_identity", worst <= rtol, worst, rtol, ctx.delay.spec())


def g0_strong_monotone(ctx: AnalyticContext, sol: OptimalSolution, tol: float = 1e-9) -> Check:
    """``(gamma - gamma*) g_bar_0(gamma) <= -l(3 m) (gamma - gamma*)^2`` with
    ``m = min(gamma, gamma*)``.

    Above the root ``m = gamma*``.  Below it the slope of ``g_bar_0`` is
    ``-l(3 s)`` for ``s`` between ``gamma`` and ``gamma*``, and ``l`` grows, so
    the bound only holds with ``l`` taken at ``gamma``.
    """
    ls = expected_frame_length(ctx, 3 * sol.gamma_star)
    worst = -math.inf
    for g in _grid(ctx.delay):
        dg = g - sol.gamma_star
        lg = ls if dg >= 0 else expected_frame_length(ctx, 3 * g)
        worst = max(worst, dg * g_bar(ctx, g) + lg * dg * dg)
    lim = tol * max(1.0, ctx.delay.second_moment)
    return Check("g0_strong_monotone", worst <= lim, worst, lim, ctx.delay.spec())


def g0_assembly(ctx: AnalyticContext, tol: float = ASSEMBLY_TOL) -> Check:
    """``g_bar_0(gamma) = q(3 gamma) - gamma l(3 gamma)`` on the same nodes."""
    worst = 0.0
    for g in _grid(ctx.delay, 20):
        a = g_bar(ctx, g)
        b = expected_frame_quartic(ctx, 3 * g) - g * expected_frame_length(ctx, 3 * g)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return Check("g0_assembly", worst <= tol, worst, tol, ctx.delay.spec())


def solver_residual(ctx: AnalyticContext, sol: OptimalSolution, tol: float = 1e-9) -> Check:
    lo, hi = gamma_bracket(ctx.delay, sol.f_max)
    lim = tol * max(1.0, ctx.delay.second_moment)
    ok = sol.residual <= lim and lo - 1e-12 <= sol.gamma_star <= hi + 1e-12
    return Check("solver_residual_and_bracket", ok, sol.residual, lim,
                 f"gamma*={sol.gamma_star:.10g} in [{lo:.6g}, {hi:.6g}]")


def threshold_argmin(ctx: AnalyticContext, sol: OptimalSolution, points: int = 2001) -> Check:
    """Over a grid of ``tau^2``, ``q(tau^2) - (gamma* + nu*) l(tau^2)`` is
    smallest at the grid point nearest ``3 (gamma* + nu*)``."""
    w = sol.gamma_star + sol.nu_star
    target = 3 * w
    grid = np.linspace(0.0, 3 * target if target > 0 else 1.0, points)
    costs = np.array([threshold_cost(ctx, x, w) for x in grid])
    best = grid[int(np.argmin(costs))]
    spacing = grid[1] - grid[0]
    err = abs(best - target)
    return Check("threshold_grid_argmin", err <= spacing, err, spacing,
                 f"argmin tau^2={best:.6g}, expected {target:.6g}")


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _z_check(name, got, se, want, z_max, detail=""):
    z = abs(got - want) / se if se > 0 else (0.0 if got == want else math.inf)
    return Check(name, z <= z_max, z, z_max, detail or f"mean {got:.6g} +- {se:.3g}, target {want:.6g}")


def wald_identity(ctx: AnalyticContext, tau: float, n: int, seed: int, z_max: float = 4.0) -> list[Check]:
    """Frame length and squared frame increment both average to ``l(tau^2)``."""
    rng = RngStream(seed, 0)
    d = ctx.delay.sample(rng, n)
    fr = simulate_frames(rng, d, tau)
    want = expected_frame_length(ctx, tau * tau)
    length = d + fr["wait_time"]
    m1, s1 = _mean_se(length)
    m2, s2 = _mean_se(fr["exit_value"] ** 2)
    return [
        _z_check("frame_length_mean", m1, s1, want, z_max),
        _z_check("wald_identity", m2, s2, want, z_max),
    ]


def stopping_identity(ctx: AnalyticContext, tau: float, n: int, seed: int, z_max: float = 4.0) -> list[Check]:
    """``E int Z^2 = E Z_L^4 / 6`` and both equal ``q(tau^2)``."""
    rng = RngStream(seed, 1)
    d = ctx.delay.sample(rng, n)
    fr = simulate_frames(rng, d, tau)
    diff = fr["path_integral_2"] - fr["exit_value"] ** 4 / 6.0
    md, sd = _mean_se(diff)
    mq, sq = _mean_se(fr["exit_value"] ** 4 / 6.0)
    return [
        _z_check("stopping_identity", md, sd, 0.0, z_max),
        _z_check("frame_quartic_mean", mq, sq, expected_frame_quartic(ctx, tau * tau), z_max),
    ]


def estimator_agreement(model: DelayModel, policy, n: int, seed: int, z_max: float = 4.0) -> Check:
    """Path and martingale frame-error estimators agree in mean (paired SE)."""
    tr = run_trace(model, policy, n, RngStream(seed, 2), record=np.array([n - 1]))
    mean_diff = (tr.sums["err_path"] - tr.sums["err_mart"]) / n
    var = max(tr.sums["err_diff_sq"] / n - mean_diff**2, 0.0)
    se = math.sqrt(var / n)
    return _z_check(f"estimator_agreement[{policy.name}]", mean_diff, se, 0.0, z_max)


def precision_warning(seed: int) -> Check:
    """A coarse step must raise :class:`PrecisionWarning`."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        first_exit_after_delay(RngStream(seed, 3), 0.5, 1.0, step=0.1)
    hit = any(issubclass(w.category, PrecisionWarning) for w in caught)
    return Check("precision_warning_surfaced", hit, float(hit), 1.0, "step=0.1 at threshold 1")


def run_all(delay: DelayModel, frames: int = 2 * 10**5, seed: int = 1, f_max: float = math.inf) -> list[Check]:
    """The full invariant suite on ``delay`` plus the lognormal preset's
    analytic checks."""
    out: list[Check] = []
    models = [delay]
    preset = DelayModel.lognormal(0.8, 1.2)
    if delay != preset:
        models.append(preset)
    for m in models:
        ctx = AnalyticContext(m)
        sol = solve(ctx, f_max if m is delay else math.inf)
        out.append(solver_residual(ctx, sol))
        if m.mean > 0:
            out += [g0_monotone(ctx), g0_curvature(ctx), g0_derivative_identity(ctx),
                    g0_strong_monotone(ctx, solve(ctx)), g0_assembly(ctx)]
        out.append(threshold_argmin(ctx, sol))
    ctx = AnalyticContext(delay)
    sol = solve(ctx, f_max)
    tau = sol.tau_star if sol.tau_star > 0 else 1.0
    out += wald_identity(ctx, tau, frames, seed)
    out += stopping_identity(ctx, tau, frames, seed)
    out.append(estimator_agreement(delay, ThresholdPolicy(tau), frames, seed))
    out.append(estimator_agreement(delay, ConstantWaitPolicy(0.0, name="zerowait"), frames, seed))
    out.append(precision_warning(seed))
    return out
