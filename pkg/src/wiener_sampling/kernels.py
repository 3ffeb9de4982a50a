"""Random kernels: Gaussian draws, Wiener increments and band-exit simulation.

The frame simulator works on a single grid per frame.  The delay portion
``[0, D]`` is a free Brownian path sampled exactly at the grid nodes; the
waiting portion runs Euler steps out of the band ``[-tau, tau]`` with a
Brownian-bridge crossing test on every step.  When a crossing is detected the
hitting time inside the step is drawn from its exact conditional law given
the two endpoints (an inverse-Gaussian variate after the change of variables
``s = t / (h - t)``), so the only remaining discretization error comes from
treating the two barriers separately.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

# waiting-portion step as a fraction of tau^2
DEFAULT_STEP_FRACTION = 1.0 / 400.0
# steps coarser than this fraction of tau^2 trigger a PrecisionWarning
WARN_STEP_FRACTION = 1.0 / 50.0
# upper bound on grid nodes spent on the delay portion of a frame
MAX_DELAY_NODES = 1024
# grid step used when the threshold is zero and no cap is given
ZERO_THRESHOLD_STEP = 0.01
# exponent beyond which a bridge crossing probability is treated as zero
_BRIDGE_CUTOFF = 40.0


class PrecisionWarning(UserWarning):
    """Discretization step is coarse relative to the threshold."""


@dataclass
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by a counter-based Philox generator keyed through
    ``SeedSequence(seed, spawn_key=(stream_id,))`` so replication ``r`` of an
    experiment draws the same numbers regardless of scheduling.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class ExitSample:
    """One simulated frame of ``Z_t = X_{S+t} - X_S``.

    ``path_integral_1``/``path_integral_2`` are trapezoid sums of ``Z`` and
    ``Z**2`` over the whole frame; ``delay_integral_1`` is the part of the
    first integral accumulated over ``[0, delay]`` only.
    """

    delay: float
    wait_time: float
    delivery_value: float
    exit_value: float
    path_integral_1: float
    path_integral_2: float
    delay_integral_1: float

    @property
    def frame_length(self) -> float:
        return self.delay + self.wait_time


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def default_step(threshold: float, cap: float = math.inf) -> float:
    """Default waiting-portion step ``min(cap, threshold**2 / 400)``.

    A zero threshold never waits; the step then only sets the delay-portion
    grid and falls back to ``min(cap, ZERO_THRESHOLD_STEP)``.
    """
    s = threshold * threshold * DEFAULT_STEP_FRACTION
    if s <= 0.0:
        return min(cap, ZERO_THRESHOLD_STEP)
    return min(cap, s)


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _normal(rng, mean, variance):
    if variance == 0.0:
        return mean
    return mean + math.sqrt(variance) * rng.standard_normal()


@numba.njit(cache=True)
def _bridge_hit_time(rng, h, a, c):
    """Hitting time of a barrier inside a step of length ``h``.

    ``a`` and ``c`` are the distances from the start and end points to the
    barrier.  Conditional on crossing, ``s = t/(h-t)`` is inverse Gaussian
    with mean ``a/c`` and shape ``a**2/h``.
    """
    if a <= 0.0:
        return 0.0
    if c <= 0.0:
        # Levy limit of the inverse Gaussian as its mean diverges
        z = rng.standard_normal()
        s = a * a / (h * z * z)
    else:
        s = rng.wald(a / c, a * a / h)
    return h * s / (1.0 + s)


@numba.njit(cache=True)
def _simulate_frame(rng, delay, tau, step, max_delay_nodes):
    """Return (wait, delivery_value, exit_value, I1, I2, I1_delay)."""
    # delay portion: free Brownian motion, exact at the nodes
    x = 0.0
    i1 = 0.0
    i2 = 0.0
    if delay > 0.0:
        n = int(math.ceil(delay / step))
        if n < 1:
            n = 1
        if n > max_delay_nodes:
            n = max_delay_nodes
        h = delay / n
        sh = math.sqrt(h)
        for _ in range(n):
            xn = x + sh * rng.standard_normal()
            i1 += 0.5 * h * (x + xn)
            i2 += 0.5 * h * (x * x + xn * xn)
            x = xn
    z_delay = x
    i1_delay = i1
    if abs(x) >= tau:
        return 0.0, z_delay, z_delay, i1, i2, i1_delay

    # waiting portion: Euler steps with bridge crossing correction
    h = step
    sh = math.sqrt(h)
    t = 0.0
    while True:
        xn = x + sh * rng.standard_normal()
        hit = 0.0
        if xn >= tau:
            hit = tau
        elif xn <= -tau:
            hit = -tau
        else:
            e_up = 2.0 * (tau - x) * (tau - xn) / h
            e_dn = 2.0 * (tau + x) * (tau + xn) / h
            if e_up < _BRIDGE_CUTOFF or e_dn < _BRIDGE_CUTOFF:
                p_up = math.exp(-e_up)
                p_dn = math.exp(-e_dn)
                u = rng.random()
                if u < p_up:
                    hit = tau
                elif u < p_up + p_dn:
                    hit = -tau
        if hit != 0.0:
            dt = _bridge_hit_time(rng, h, abs(hit - x), abs(hit - xn))
            i1 += 0.5 * dt * (x + hit)
            i2 += 0.5 * dt * (x * x + hit * hit)
            t += dt
            return t, z_delay, hit, i1, i2, i1_delay
        i1 += 0.5 * h * (x + xn)
        i2 += 0.5 * h * (x * x + xn * xn)
        x = xn
        t += h


@numba.njit(cache=True)
def _default_step(tau, cap):
    s = tau * tau * DEFAULT_STEP_FRACTION
    if s <= 0.0:
        s = ZERO_THRESHOLD_STEP
    return min(s, cap)


@numba.njit(cache=True)
def _simulate_frames(rng, delays, tau, step_cap, max_delay_nodes):
    n = delays.shape[0]
    out = np.empty((n, 6))
    step = _default_step(tau, step_cap)
    for i in range(n):
        w, zd, ex, i1, i2, i1d = _simulate_frame(rng, delays[i], tau, step, max_delay_nodes)
        out[i, 0] = w
        out[i, 1] = zd
        out[i, 2] = ex
        out[i, 3] = i1
        out[i, 4] = i2
        out[i, 5] = i1d
    return out


@numba.njit(cache=True)
def _normals(rng, n, mean, variance):
    out = np.empty(n)
    for i in range(n):
        out[i] = _normal(rng, mean, variance)
    return out


# --------------------------------------------------------------------------
# public operations


def gaussian(rng: RngStream, mean: float = 0.0, variance: float = 1.0, size: int | None = None):
    """Draw from ``N(mean, variance)``; ``variance == 0`` returns ``mean`` exactly."""
    _check_finite(mean=mean, variance=variance)
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    if size is None:
        return float(_normal(rng.generator, float(mean), float(variance)))
    return _normals(rng.generator, int(size), float(mean), float(variance))


def wiener_at_delay(rng: RngStream, delay: float, size: int | None = None):
    """Value ``Z_D ~ N(0, delay)`` of a Wiener process started at 0."""
    _check_finite(delay=delay)
    if delay < 0:
        raise ValueError(f"delay must be non-negative, got {delay}")
    return gaussian(rng, 0.0, delay, size)


def _check_step(threshold: float, step: float) -> None:
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if threshold > 0 and step > WARN_STEP_FRACTION * threshold * threshold:
        warnings.warn(
            f"step {step:g} exceeds {WARN_STEP_FRACTION:g} * threshold^2 = "
            f"{WARN_STEP_FRACTION * threshold * threshold:g}; exit times will be biased",
            PrecisionWarning,
            stacklevel=3,
        )


def first_exit_after_delay(
    rng: RngStream,
    delay: float,
    threshold: float,
    step: float | None = None,
    max_delay_nodes: int = MAX_DELAY_NODES,
) -> ExitSample:
    """Simulate one frame: run ``Z`` for ``delay``, then wait for ``|Z| >= threshold``.

    Parameters
    ----------
    rng : RngStream
    delay : float
        Transmission delay ``D >= 0``.
    threshold : float
        Band half-width ``tau >= 0``.
    step : float, optional
        Euler step of the waiting portion; defaults to ``default_step(threshold)``.
    max_delay_nodes : int
        Cap on grid nodes over the delay portion.  The trapezoid sums are
        unbiased for a free Brownian path at any resolution, so the cap only
        affects their variance.

    Returns
    -------
    ExitSample
    """
    _check_finite(delay=delay, threshold=threshold)
    if delay < 0 or threshold < 0:
        raise ValueError("delay and threshold must be non-negative")
    if step is None:
        step = default_step(threshold)
    _check_finite(step=step)
    _check_step(threshold, step)
    w, zd, ex, i1, i2, i1d = _simulate_frame(
        rng.generator, float(delay), float(threshold), float(step), int(max_delay_nodes)
    )
    return ExitSample(float(delay), w, zd, ex, i1, i2, i1d)


def simulate_frames(
    rng: RngStream,
    delays: np.ndarray,
    threshold: float,
    step_cap: float = math.inf,
    max_delay_nodes: int = MAX_DELAY_NODES,
) -> dict[str, np.ndarray]:
    """Vectorized :func:`first_exit_after_delay` over an array of delays.

    The waiting step is ``default_step(threshold, step_cap)``.  Returns a dict
    of column arrays keyed like :class:`ExitSample` fields.
    """
    delays = np.ascontiguousarray(delays, dtype=float)
    if np.any(delays < 0) or not np.all(np.isfinite(delays)):
        raise ValueError("delays must be finite and non-negative")
    _check_finite(threshold=threshold)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    cap = float(step_cap) if math.isfinite(step_cap) else 1.0e300
    _check_step(threshold, default_step(threshold, step_cap))
    out = _simulate_frames(rng.generator, delays, float(threshold), cap, int(max_delay_nodes))
    return {
        "delay": delays,
        "wait_time": out[:, 0],
        "delivery_value": out[:, 1],
        "exit_value": out[:, 2],
        "path_integral_1": out[:, 3],
        "path_integral_2": out[:, 4],
        "delay_integral_1": out[:, 5],
    }
