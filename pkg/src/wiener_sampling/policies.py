"""Sampling policies as per-frame strategies.

Each policy decides the wait after a delivery.  The online learner adapts
its threshold by a projected Robbins-Monro step on the frame cost and keeps
a virtual queue of sampling-rate violations whose scaled positive part acts
as the rate multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba

from .analytic import g_point
from .solver import OptimalSolution

ONLINE, THRESHOLD, CONSTANT_WAIT = 0, 1, 2


@numba.njit(cache=True)
def step_size(k, alpha, dlb):
    return k ** (-alpha) / (2.0 * dlb)


@numba.njit(cache=True)
def rm_update(gamma, nu, U, k, alpha, dlb, inv_fmax, delivery_value, frame_length):
    """One learner update; returns ``(gamma_next, U_next)``."""
    y = g_point(gamma, nu, delivery_value)
    g = gamma + step_size(k, alpha, dlb) * y
    if g < 0.0:
        g = 0.0
    return g, U + (inv_fmax - frame_length)


@dataclass(frozen=True)
class PolicyState:
    """Online learner state at the start of frame ``k``."""

    k: int = 1
    gamma: float = 0.0
    U: float = 0.0
    V: float = 1.0
    alpha: float = 1.0
    dlb: float = 1.0
    f_max: float = math.inf

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("frame index starts at 1")
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0.5, 1]")
        if not self.V > 0:
            raise ValueError("V must be positive")
        if not self.dlb > 0:
            raise ValueError("dlb must be positive")
        if not self.f_max > 0:
            raise ValueError("f_max must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def nu(self) -> float:
        return max(self.U, 0.0) / self.V

    @property
    def eta(self) -> float:
        return step_size(self.k, self.alpha, self.dlb)

    @property
    def inv_fmax(self) -> float:
        return 0.0 if math.isinf(self.f_max) else 1.0 / self.f_max


@dataclass(frozen=True)
class FrameRecord:
    k: int
    S: float
    D: float
    W: float
    L: float
    deltaX_delivery: float
    deltaX_frame: float
    prev_deltaX_frame: float
    error_path: float
    error_mart: float
    gamma: float
    nu: float
    U: float


def online_wait_rule(state: PolicyState) -> float:
    """Threshold ``sqrt(3 (gamma_k + nu_k))`` for frame ``k``."""
    return math.sqrt(3.0 * (state.gamma + state.nu))


def online_update(state: PolicyState, frame: FrameRecord) -> PolicyState:
    """Advance the learner past ``frame``.

    The cost sample uses the increment at delivery, not at the end of the
    frame: only the former is an unbiased draw of ``Z_D``.
    """
    if frame.k != state.k:
        raise ValueError(f"frame {frame.k} does not match state at frame {state.k}")
    gamma, U = rm_update(
        state.gamma, state.nu, state.U, state.k, state.alpha, state.dlb,
        state.inv_fmax, frame.deltaX_delivery, frame.L,
    )
    return replace(state, k=state.k + 1, gamma=gamma, U=U)


def offline_policy(sol: OptimalSolution) -> float:
    """Constant threshold ``sqrt(3 (gamma* + nu*))``."""
    return math.sqrt(3.0 * (sol.gamma_star + sol.nu_star))


def constant_wait_policy(w: float) -> float:
    if not w >= 0:
        raise ValueError("wait must be non-negative")
    return float(w)


# --------------------------------------------------------------------------
# policy objects consumed by the simulator


@dataclass(frozen=True)
class OnlinePolicy:
    V: float = 1.0
    alpha: float = 1.0
    dlb: float | None = None
    f_max: float = math.inf
    name: str = "online"

    def initial_state(self, dlb: float) -> PolicyState:
        return PolicyState(V=self.V, alpha=self.alpha, dlb=self.dlb or dlb, f_max=self.f_max)


@dataclass(frozen=True)
class ThresholdPolicy:
    tau: float
    name: str = "optimal"

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("threshold must be non-negative")

    @classmethod
    def from_solution(cls, sol: OptimalSolution) -> "ThresholdPolicy":
        return cls(offline_policy(sol))


@dataclass(frozen=True)
class ConstantWaitPolicy:
    wait: float
    name: str = "const"

    def __post_init__(self):
        constant_wait_policy(self.wait)


def parse_policy(text: str, sol: OptimalSolution | None = None, **online_kw):
    """``online``, ``optimal``, ``const:w`` or ``zerowait``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "online":
        return OnlinePolicy(**online_kw)
    if kind == "optimal":
        if sol is None:
            raise ValueError("optimal policy needs a solved OptimalSolution")
        return ThresholdPolicy.from_solution(sol)
    if kind == "zerowait":
        return ConstantWaitPolicy(0.0, name="zerowait")
    if kind == "const":
        try:
            return ConstantWaitPolicy(float(arg), name=f"const:{float(arg)!r}")
        except ValueError as exc:
            raise ValueError(f"bad constant wait in {text!r}") from exc
    raise ValueError(f"unknown policy spec {text!r}")
