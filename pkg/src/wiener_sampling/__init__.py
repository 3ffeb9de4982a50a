"""Online and offline sampling of a Wiener process over a random-delay channel."""
from .analytic import (
    AnalyticContext,
    IntegrationError,
    constant_wait_mse,
    expected_frame_length,
    expected_frame_quartic,
    g_bar,
    g_point,
    gamma_bracket,
    waiting_probability,
)
from .delays import DelayModel, lecam_density, parse_delay
from .kernels import (
    ExitSample,
    PrecisionWarning,
    RngStream,
    first_exit_after_delay,
    gaussian,
    wiener_at_delay,
)
from .policies import (
    ConstantWaitPolicy,
    FrameRecord,
    OnlinePolicy,
    PolicyState,
    ThresholdPolicy,
    constant_wait_policy,
    offline_policy,
    online_update,
    online_wait_rule,
    parse_policy,
)
from .simulate import (
    TraceSeries,
    constraint_report,
    frame_error_mart,
    frame_error_path,
    regret_series,
    run_replications,
    run_trace,
)
from .solver import OptimalSolution, SolverError, lecam_delta, solve, solve_constrained, solve_unconstrained

__version__ = "0.1.0"

__all__ = [
    "AnalyticContext",
    "IntegrationError",
    "constant_wait_mse",
    "expected_frame_length",
    "expected_frame_quartic",
    "g_bar",
    "g_point",
    "gamma_bracket",
    "waiting_probability",
    "DelayModel",
    "lecam_density",
    "parse_delay",
    "ExitSample",
    "PrecisionWarning",
    "RngStream",
    "first_exit_after_delay",
    "gaussian",
    "wiener_at_delay",
    "ConstantWaitPolicy",
    "FrameRecord",
    "OnlinePolicy",
    "PolicyState",
    "ThresholdPolicy",
    "constant_wait_policy",
    "offline_policy",
    "online_update",
    "online_wait_rule",
    "parse_policy",
    "TraceSeries",
    "constraint_report",
    "frame_error_mart",
    "frame_error_path",
    "regret_series",
    "run_replications",
    "run_trace",
    "OptimalSolution",
    "SolverError",
    "lecam_delta",
    "solve",
    "solve_constrained",
    "solve_unconstrained",
]
