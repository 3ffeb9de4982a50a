import json
import math
import time

import pytest

from wiener_sampling.analytic import AnalyticContext, expected_frame_length, g_bar, gamma_bracket
from wiener_sampling.checks import threshold_argmin
from wiener_sampling.delays import DelayModel
from wiener_sampling.solver import lecam_delta, solve, solve_constrained, solve_unconstrained

DET1 = DelayModel.deterministic(1.0)
UNI = DelayModel.uniform(0.0, 1.0)
LOGN = DelayModel.lognormal(0.8, 1.2)

# frozen output of tests/oracles/mc_gamma_oracle.py: (gamma*, standard error)
MC_ORACLE = {
    DET1.spec(): (0.3981157873, 2.334e-4),
    UNI.spec(): (0.2422845278, 1.976e-4),
    LOGN.spec(): (4.6698198776, 6.184e-2),
}


@pytest.fixture(scope="module")
def solutions():
    return {m.spec(): (AnalyticContext(m), solve_unconstrained(AnalyticContext(m))) for m in (DET1, UNI, LOGN)}


@pytest.mark.parametrize("spec", list(MC_ORACLE))
def test_root_residual_and_bracket(solutions, spec):
    ctx, sol = solutions[spec]
    lo, hi = gamma_bracket(ctx.delay)
    assert lo <= sol.gamma_star <= hi
    assert sol.residual <= 1e-9 * max(1.0, ctx.delay.second_moment)
    assert abs(g_bar(ctx, sol.gamma_star)) == pytest.approx(sol.residual, abs=1e-12 * max(1.0, ctx.delay.second_moment))


@pytest.mark.parametrize("spec", list(MC_ORACLE))
def test_root_against_monte_carlo_oracle(solutions, spec):
    _, sol = solutions[spec]
    want, se = MC_ORACLE[spec]
    assert abs(sol.gamma_star - want) <= 3 * se


def test_frozen_package_values(solutions):
    assert solutions[DET1.spec()][1].gamma_star == pytest.approx(0.3980492614, rel=1e-8)
    _, u = solutions[UNI.spec()]
    assert u.gamma_star == pytest.approx(0.2419825339, rel=1e-8)
    assert u.tau_star == pytest.approx(0.85202558748, rel=1e-8)
    assert u.frame_length_star == pytest.approx(0.94109445559, rel=1e-8)
    _, g = solutions[LOGN.spec()]
    assert g.gamma_star == pytest.approx(4.6159427175, rel=1e-8)
    assert g.mse_opt == pytest.approx(9.18817, abs=1e-5)


def test_zero_delay():
    sol = solve_unconstrained(AnalyticContext(DelayModel.deterministic(0.0)))
    assert sol.gamma_star == 0.0 and sol.tau_star == 0.0 and sol.mse_opt == 0.0


def test_mse_below_zero_wait_and_above_lower_bound(solutions):
    d1 = solutions[DET1.spec()][1]
    assert d1.mse_opt <= 1.5
    u = solutions[UNI.spec()][1]
    assert 1 / 12 < u.gamma_star < 1 / 3
    for spec, (ctx, sol) in solutions.items():
        # tau* = 0 is never optimal for a non-degenerate delay, and
        # mse_opt is at least 7/6 Dbar by the Cauchy-Schwarz bound
        assert sol.tau_star > 0
        assert sol.mse_opt >= 7 / 6 * ctx.delay.mean - 1e-12


@pytest.mark.parametrize("spec", list(MC_ORACLE))
def test_threshold_is_grid_argmin(solutions, spec):
    ctx, sol = solutions[spec]
    assert threshold_argmin(ctx, sol).passed


def test_constrained_infinite_rate_is_unconstrained(solutions):
    ctx, sol = solutions[UNI.spec()]
    c = solve(ctx, math.inf)
    assert c.gamma_star == sol.gamma_star and c.nu_star == 0.0


def test_constrained_slack_rate_gives_zero_multiplier(solutions):
    ctx, sol = solutions[DET1.spec()]
    c = solve_constrained(ctx, 1e6)
    assert c.nu_star == 0.0 and c.gamma_star == sol.gamma_star


def test_constrained_lognormal_auto10():
    ctx = AnalyticContext(LOGN)
    t0 = time.perf_counter()
    f = 1.0 / (10 * LOGN.mean)
    c = solve(ctx, f)
    assert time.perf_counter() - t0 < 10
    assert c.nu_star > 0
    assert c.frame_length_star == pytest.approx(10 * LOGN.mean, rel=1e-6)
    assert expected_frame_length(ctx, c.tau_sq_star) == pytest.approx(1 / f, rel=1e-6)
    assert c.gamma_star == pytest.approx(8.073522, abs=1e-5)
    assert c.nu_star == pytest.approx(6.937047, abs=1e-5)
    assert c.mse_opt == pytest.approx(12.645748, abs=1e-5)
    assert c.cs_residual <= 1e-6 * c.nu_star * c.frame_length_star
    assert c.residual <= 1e-9 * LOGN.second_moment


def test_constraint_raises_cost(solutions):
    ctx, sol = solutions[DET1.spec()]
    c = solve(ctx, 1 / 3.0)
    assert c.mse_opt > sol.mse_opt
    assert c.frame_length_star == pytest.approx(3.0, rel=1e-6)


def test_invalid_rate():
    with pytest.raises(ValueError):
        solve_constrained(AnalyticContext(DET1), 0.0)


def test_lecam_delta():
    d = lecam_delta()
    assert d == pytest.approx(0.27405, abs=5e-5)
    assert 0 < d <= 1 / 3


def test_solution_json(solutions):
    d = json.loads(solutions[DET1.spec()][1].to_json())
    assert set(d) == {"gamma_star", "nu_star", "tau_star", "frame_length_star", "mse_opt", "residual"}
    assert d["tau_star"] == pytest.approx(math.sqrt(3 * d["gamma_star"]))
