"""Offline optimal threshold: root of the frame-cost equation plus the
complementary-slackness condition on the sampling-rate multiplier."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .analytic import (
    AnalyticContext,
    expected_frame_length,
    g_bar,
    gamma_bracket,
    waiting_probability,
)
from .delays import DelayModel

MAX_ITER = 400


class SolverError(RuntimeError):
    """Bisection failed: bad bracket, non-monotone map or no convergence."""


@dataclass(frozen=True)
class OptimalSolution:
    gamma_star: float
    nu_star: float
    tau_sq_star: float
    frame_length_star: float
    mse_opt: float
    residual: float
    cs_residual: float
    f_max: float = math.inf
    delay_spec: str | None = None

    @property
    def tau_star(self) -> float:
        return math.sqrt(self.tau_sq_star)

    def to_json(self) -> str:
        d = {
            "gamma_star": self.gamma_star,
            "nu_star": self.nu_star,
            "tau_star": self.tau_star,
            "frame_length_star": self.frame_length_star,
            "mse_opt": self.mse_opt,
            "residual": self.residual,
        }
        return json.dumps(d, indent=2)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["tau_star"] = self.tau_star
        return d


def _scale(ctx: AnalyticContext) -> float:
    return max(1.0, ctx.delay.second_moment)


def _bisect_decreasing(fn, lo, hi, ftol, xtol=0.0):
    """Root of a decreasing ``fn`` on ``[lo, hi]`` with ``fn(lo) > 0 > fn(hi)``."""
    flo, fhi = fn(lo), fn(hi)
    if not flo > 0:
        raise SolverError(f"bracket sign failure: f({lo!r}) = {flo!r} <= 0")
    if not fhi < 0:
        raise SolverError(f"bracket sign failure: f({hi!r}) = {fhi!r} >= 0")
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if abs(fm) <= ftol or hi - lo <= xtol:
            return mid, fm
        if fm > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4.0 * math.ulp(hi):
            # interval at machine resolution; return the better end
            return (lo, fn(lo)) if abs(fn(lo)) < abs(fn(hi)) else (hi, fn(hi))
    raise SolverError("bisection did not converge")


def _gamma_root(ctx: AnalyticContext, nu: float, ftol: float, hi_hint: float) -> tuple[float, float]:
    """Root in ``gamma`` of ``g_bar_nu``; decreasing for every ``nu >= 0``."""
    fn = lambda g: g_bar(ctx, g, nu)
    lo = 0.0
    if fn(lo) <= ftol:
        return 0.0, fn(0.0)
    hi = max(hi_hint, 1e-12)
    for _ in range(200):
        if fn(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SolverError("could not bracket gamma root")
    return _bisect_decreasing(fn, lo, hi, ftol)


def _solution(ctx, gamma, nu, resid, f_max):
    tau_sq = 3.0 * (gamma + nu)
    length = expected_frame_length(ctx, tau_sq)
    w = 0.0 if math.isinf(f_max) else 1.0 / f_max
    cs = nu * (length - w)
    return OptimalSolution(
        gamma_star=gamma,
        nu_star=nu,
        tau_sq_star=tau_sq,
        frame_length_star=length,
        mse_opt=gamma + ctx.delay.mean,
        residual=abs(resid),
        cs_residual=abs(cs),
        f_max=f_max,
        delay_spec=ctx.delay.spec(),
    )


def solve_unconstrained(ctx: AnalyticContext, tol: float = 1e-9) -> OptimalSolution:
    """Root of ``g_bar_0`` by bisection on the a-priori bracket."""
    model = ctx.delay
    if model.mean == 0.0:
        # Z_D == 0, g_bar_0(gamma) = -1.5 gamma^2
        return _solution(ctx, 0.0, 0.0, g_bar(ctx, 0.0), math.inf)
    lo, hi = gamma_bracket(model)
    ftol = tol * _scale(ctx)
    gamma, resid = _bisect_decreasing(lambda g: g_bar(ctx, g), lo, hi, ftol)
    return _solution(ctx, gamma, 0.0, resid, math.inf)


def solve_constrained(
    ctx: AnalyticContext, f_max: float, tol: float = 1e-9, length_rtol: float = 1e-8
) -> OptimalSolution:
    """Optimal ``(gamma*, nu*)`` under the mean-frame-length floor ``1/f_max``.

    Nested bisection: the outer loop searches ``nu`` so that the expected
    frame length at threshold ``3(gamma(nu) + nu)`` equals ``1/f_max``; the
    inner loop solves ``g_bar_nu(gamma) = 0`` ten times tighter.
    """
    if not f_max > 0:
        raise ValueError("f_max must be positive")
    base = solve_unconstrained(ctx, tol)
    if math.isinf(f_max):
        return base
    target = 1.0 / f_max
    if base.frame_length_star >= target:
        return _solution(ctx, base.gamma_star, 0.0, base.residual, f_max)

    ftol = 0.1 * tol * _scale(ctx)
    hint = gamma_bracket(ctx.delay, f_max)[1]

    def length_at(nu):
        g, r = _gamma_root(ctx, nu, ftol, hint)
        return expected_frame_length(ctx, 3.0 * (g + nu)), g, r

    lo, hi = 0.0, max(target, 1.0)
    prev = base.frame_length_star
    for _ in range(200):
        l_hi, _, _ = length_at(hi)
        if l_hi < prev:
            raise SolverError("frame length is not monotone in nu")
        if l_hi >= target:
            break
        lo, prev, hi = hi, l_hi, 2.0 * hi
    else:
        raise SolverError("could not bracket nu")

    l_lo = prev
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        l_mid, g_mid, r_mid = length_at(mid)
        if not (l_lo - 1e-12 * target <= l_mid):
            raise SolverError("frame length is not monotone in nu")
        if abs(l_mid - target) <= length_rtol * target:
            return _solution(ctx, g_mid, mid, r_mid, f_max)
        if l_mid < target:
            lo, l_lo = mid, l_mid
        else:
            hi = mid
    raise SolverError("constrained solve did not converge")


def solve(ctx: AnalyticContext, f_max: float = math.inf) -> OptimalSolution:
    return solve_constrained(ctx, f_max) if not math.isinf(f_max) else solve_unconstrained(ctx)


def lecam_delta(nodes: int = 4096) -> float:
    """``min(1 - 3 g, 1/3, p_w / 2)`` for the uniform(0, 1) delay law, where
    ``g`` is its optimal ratio and ``p_w`` its waiting probability."""
    ctx = AnalyticContext(DelayModel.uniform(0.0, 1.0), nodes=nodes)
    sol = solve_unconstrained(ctx)
    pw = waiting_probability(ctx, sol.tau_sq_star)
    return min(1.0 - 3.0 * sol.gamma_star, 1.0 / 3.0, pw / 2.0)
