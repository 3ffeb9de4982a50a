import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiener_sampling.analytic import (
    AnalyticContext,
    IntegrationError,
    constant_wait_mse,
    delay_quadrature,
    expected_frame_length,
    expected_frame_quartic,
    frame_moment_table,
    g_bar,
    g_point,
    gamma_bracket,
    threshold_cost,
    waiting_probability,
)
from wiener_sampling.checks import (
    g0_assembly,
    g0_curvature,
    g0_derivative_identity,
    g0_monotone,
    g0_strong_monotone,
)
from wiener_sampling.delays import DelayModel
from wiener_sampling.solver import solve_unconstrained

DET1 = DelayModel.deterministic(1.0)
DET0 = DelayModel.deterministic(0.0)
UNI = DelayModel.uniform(0.0, 1.0)
LOGN = DelayModel.lognormal(0.8, 1.2)

# frozen output of tests/oracles/quad_oracle.py (direct nested quadrature of
# the max-form integrands): model, tau^2, l, q, waiting prob, g_bar_0(tau^2/3)
QUAD_ORACLE = [
    (DET1, 0.5, 1.179141350561, 0.5177491415252, 0.520499877813, 0.3212255830983),
    (DET1, 1.0, 1.483941449038, 0.5950644686465, 0.682689492137, 0.1004173189671),
    (DET1, 2.0, 2.25780829037, 0.9863730466754, 0.84270079295, -0.5188324802381),
    (UNI, 0.25, 0.6050260024203, 0.1717755853885, 0.580721479949, 0.1213567518535),
    (UNI, 1.0, 1.166630941175, 0.2927237599169, 0.849320433312, -0.09615322047491),
    (LOGN, 3.0, 6.230122961412, 45.06806759795, 0.723787383845, 38.83794463654),
    (LOGN, 13.8, 15.5296461956, 71.68431028929, 0.92571096612, 0.2479377895448),
]


@pytest.fixture(scope="module")
def ctxs():
    return {m.spec(): AnalyticContext(m) for m in (DET1, DET0, UNI, LOGN)}


def test_g_point_examples():
    assert g_point(0.0, 0.0, 0.0) == 0.0
    assert g_point(1.0, 0.0, 0.0) == pytest.approx(-1.5)
    assert g_point(1.0, 0.0, 3.0) == pytest.approx(4.5)
    assert g_point(1.0, 1.0, 0.0) == pytest.approx(0.0)


@settings(max_examples=200, deadline=None)
@given(gamma=st.floats(0, 50), nu=st.floats(0, 50), z=st.floats(-20, 20))
def test_g_point_expansion(gamma, nu, z):
    # (3/2)(nu^2 - gamma^2) + nu e + e^2/6 with e = (z^2 - 3(gamma+nu))^+
    e = max(z * z - 3 * (gamma + nu), 0.0)
    want = 1.5 * (nu * nu - gamma * gamma) + nu * e + e * e / 6
    assert g_point(gamma, nu, z) == pytest.approx(want, rel=1e-9, abs=1e-9 * (1 + z**4))


@pytest.mark.parametrize("row", QUAD_ORACLE, ids=lambda r: f"{r[0].spec()}@{r[1]}")
def test_against_quadrature_oracle(ctxs, row):
    m, t, l, q, pw, gb = row
    ctx = ctxs[m.spec()]
    assert expected_frame_length(ctx, t) == pytest.approx(l, rel=1e-10)
    assert expected_frame_quartic(ctx, t) == pytest.approx(q, rel=1e-10)
    assert waiting_probability(ctx, t) == pytest.approx(pw, rel=1e-9)
    assert g_bar(ctx, t / 3) == pytest.approx(gb, rel=1e-9, abs=1e-11)


def test_g_bar_deterministic_zero(ctxs):
    ctx = ctxs["det:0.0"]
    for g in (0.0, 0.5, 2.0):
        assert g_bar(ctx, g) == pytest.approx(-1.5 * g * g, abs=1e-15)


@pytest.mark.parametrize("model", [DET1, UNI, LOGN], ids=lambda m: m.spec())
def test_g_bar_at_zero_is_half_m(ctxs, model):
    assert g_bar(ctxs[model.spec()], 0.0) == pytest.approx(model.second_moment / 2, rel=1e-10)


@pytest.mark.parametrize("model", [DET1, UNI, LOGN], ids=lambda m: m.spec())
def test_g_bar_quadrature_vs_monte_carlo(ctxs, model):
    mc = AnalyticContext(model, mode="monte_carlo", seed=77)
    g = model.mean
    val, se = g_bar(mc, g, return_se=True)
    assert abs(val - g_bar(ctxs[model.spec()], g)) <= 4 * se


def test_frame_length_examples(ctxs):
    assert expected_frame_length(ctxs["det:1.0"], 0.0) == pytest.approx(1.0)
    assert expected_frame_length(ctxs["det:0.0"], 2.5) == 2.5
    assert expected_frame_length(ctxs[LOGN.spec()], 0.0) == pytest.approx(4.5722251951, rel=1e-10)


def test_frame_quartic_examples(ctxs):
    assert expected_frame_quartic(ctxs[UNI.spec()], 0.0) == pytest.approx(1 / 6, rel=1e-12)
    assert expected_frame_quartic(ctxs["det:0.0"], 2.0) == pytest.approx(4 / 6)


@pytest.mark.parametrize("model", [DET1, UNI, LOGN], ids=lambda m: m.spec())
def test_frame_quartic_vs_monte_carlo(ctxs, model):
    mc = AnalyticContext(model, mode="monte_carlo", seed=78)
    t = 3 * model.mean
    m = np.maximum(t, mc._z2)
    x = m * m / 6
    assert abs(x.mean() - expected_frame_quartic(ctxs[model.spec()], t)) <= 4 * x.std() / math.sqrt(x.size)


def test_waiting_probability_examples(ctxs):
    assert waiting_probability(ctxs["det:1.0"], 0.0) == 0.0
    assert waiting_probability(ctxs["det:0.0"], 0.0) == 1.0
    assert waiting_probability(ctxs["det:0.0"], 3.0) == 1.0
    assert waiting_probability(ctxs["det:1.0"], 1.0) == pytest.approx(0.682689492137086, rel=1e-12)


def test_gamma_bracket_examples():
    assert gamma_bracket(DET1) == pytest.approx((1 / 6, 1 / 2))
    assert gamma_bracket(UNI) == pytest.approx((1 / 12, 1 / 3))
    lo, hi = gamma_bracket(LOGN)
    assert (round(lo, 3), round(hi, 3)) == (0.762, 9.649)
    # finite rate limit: hi equals the constant-wait excess over Dbar
    w = 2.0
    assert gamma_bracket(DET1, 1 / w)[1] == pytest.approx(constant_wait_mse(DET1, w) - 1.0)


def test_constant_wait_mse_zero_wait():
    assert constant_wait_mse(DET1, 0.0) == pytest.approx(1.5)


def test_context_validation(monkeypatch):
    with pytest.raises(ValueError):
        AnalyticContext(DET1, nodes=32)
    with pytest.raises(ValueError):
        AnalyticContext(DET1, mode="bogus")
    with pytest.raises(ValueError):
        AnalyticContext(DET1, mc_samples=100)
    import wiener_sampling.analytic as analytic

    def lossy(model, nodes=4096):
        d, w = delay_quadrature(model, nodes)
        return d, w * (1 - 1e-6)

    monkeypatch.setattr(analytic, "delay_quadrature", lossy)
    with pytest.raises(IntegrationError):
        AnalyticContext(LOGN)


def test_quadrature_weights_normalized():
    for m in (UNI, LOGN, DelayModel.lecam(0.3, 0.5, 3)):
        d, w = delay_quadrature(m)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert w @ d == pytest.approx(m.mean, rel=1e-12)


@pytest.mark.parametrize("model", [DET1, UNI, LOGN, DelayModel.lecam(0.27, 0.5, 4)], ids=lambda m: m.spec())
def test_g0_structure(model):
    ctx = AnalyticContext(model)
    sol = solve_unconstrained(ctx)
    for check in (g0_monotone(ctx), g0_curvature(ctx), g0_derivative_identity(ctx),
                  g0_strong_monotone(ctx, sol), g0_assembly(ctx)):
        assert check.passed, check


def test_strong_monotone_fails_below_root_with_root_slope(ctxs):
    # the bound with l taken at gamma* is violated just below the root
    ctx = ctxs["det:1.0"]
    sol = solve_unconstrained(ctx)
    g = sol.gamma_star - 0.2
    ls = expected_frame_length(ctx, 3 * sol.gamma_star)
    assert (g - sol.gamma_star) * g_bar(ctx, g) > -ls * 0.2**2


def test_threshold_cost_minimized_at_three_gamma(ctxs):
    ctx = ctxs[UNI.spec()]
    w = 0.3
    grid = np.linspace(0.0, 3.0, 3001)
    costs = [threshold_cost(ctx, x, w) for x in grid]
    assert grid[int(np.argmin(costs))] == pytest.approx(0.9, abs=1e-3)


def test_moment_table_derivatives(ctxs):
    ctx = ctxs[LOGN.spec()]
    x, l, dl, q, dq = frame_moment_table(ctx, points=50)
    i = 30
    h = 1e-6 * x[i]
    assert (expected_frame_length(ctx, x[i] + h) - expected_frame_length(ctx, x[i] - h)) / (2 * h) == pytest.approx(dl[i], rel=1e-6)
    assert (expected_frame_quartic(ctx, x[i] + h) - expected_frame_quartic(ctx, x[i] - h)) / (2 * h) == pytest.approx(dq[i], rel=1e-6)


def test_negative_arguments_rejected(ctxs):
    with pytest.raises(ValueError):
        g_bar(ctxs["det:1.0"], -1.0)
    with pytest.raises(ValueError):
        expected_frame_length(ctxs["det:1.0"], -1.0)
