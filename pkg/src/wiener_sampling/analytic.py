"""Frame-level expectations over ``Z_D`` where ``Z_D | D=d ~ N(0, d)``.

Every quantity reduces to three per-delay integrals of the excess
``e = (Z_d**2 - a)^+`` above a level ``a``: ``E[e]``, ``E[e**2]`` and
``Pr(Z_d**2 > a)``.  With ``s = sqrt(a/d)`` these have closed forms in the
standard normal tail ``Q(s)`` and density ``phi(s)``::

    E[e]    = 2 d   [ s phi + (1 - s^2) Q ]
    E[e^2]  = 2 d^2 [ (3s - s^3) phi + (s^4 - 2 s^2 + 3) Q ]
    Pr      = 2 Q

The outer expectation over the delay law uses Gauss-Legendre nodes (or the
atoms of a discrete law).  ``mode="monte_carlo"`` swaps the whole thing for
a fixed sample of ``Z_D**2`` and is kept as an independent cross-check.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from .delays import DelayModel, _lecam_pieces
from .kernels import RngStream

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
# lognormal nodes span [-Z_TAIL, 2*sigma + Z_TAIL] in the normal score
_Z_TAIL = 8.5
_MOMENT_RTOL = 1e-10


class IntegrationError(RuntimeError):
    pass


@functools.lru_cache(maxsize=8)
def _legendre_nodes(n: int):
    return special.roots_legendre(n)


def _legendre(n: int, lo: float, hi: float):
    x, w = _legendre_nodes(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def delay_quadrature(model: DelayModel, nodes: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum(w * f(d)) ~= E[f(D)]``."""
    if model.kind == "deterministic":
        return np.array(model.params[:1]), np.ones(1)
    if model.kind == "empirical":
        vals, counts = np.unique(model.samples, return_counts=True)
        return vals, counts / counts.sum()
    if model.kind == "uniform":
        a, b = model.params
        d, w = _legendre(nodes, a, b)
        return d, w / (b - a)
    if model.kind == "lecam":
        ds, ws = [], []
        per = max(nodes // 3, 64)
        for lo, hi, dens in _lecam_pieces(*model.params):
            d, w = _legendre(per, lo, hi)
            ds.append(d)
            ws.append(w * dens)
        return np.concatenate(ds), np.concatenate(ws)
    mu, sigma = model.params
    # the D^2-weighted density peaks at score 2*sigma
    z, w = _legendre(nodes, -_Z_TAIL, 2.0 * sigma + _Z_TAIL)
    return np.exp(mu + sigma * z), w * _INV_SQRT2PI * np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class AnalyticContext:
    """Evaluation context for expectations over the delay law."""

    delay: DelayModel
    nodes: int = 4096
    mc_samples: int = 10**6
    mode: str = "quadrature"
    seed: int = 20240101
    _d: np.ndarray = field(init=False, repr=False, compare=False)
    _w: np.ndarray = field(init=False, repr=False, compare=False)
    _z2: np.ndarray | None = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.mode not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.nodes < 64:
            raise ValueError("quadrature needs at least 64 nodes")
        if self.mc_samples < 10**4:
            raise ValueError("monte carlo mode needs at least 1e4 samples")
        d, w = delay_quadrature(self.delay, self.nodes)
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_w", w)
        self._check_moments()
        if self.mode == "monte_carlo":
            rng = RngStream(self.seed, 0)
            dd = self.delay.sample(rng, self.mc_samples)
            z = rng.generator.standard_normal(self.mc_samples) * np.sqrt(dd)
            object.__setattr__(self, "_z2", z * z)

    def _check_moments(self):
        d, w = self._d, self._w
        for got, want in ((w.sum(), 1.0), (w @ d, self.delay.mean), (w @ d**2, self.delay.second_moment)):
            if abs(got - want) > _MOMENT_RTOL * max(1.0, abs(want)):
                raise IntegrationError(
                    f"quadrature moment {got!r} differs from exact {want!r}; increase nodes"
                )

    @property
    def mean_delay(self) -> float:
        return self.delay.mean

    def excess(self, level: float) -> tuple[float, float, float, float]:
        """``(E[e], E[e^2], Pr(Z^2 > level), se)`` for ``e = (Z_D^2 - level)^+``.

        ``se`` is the Monte Carlo standard error of ``E[e^2]`` (0 in
        quadrature mode).
        """
        if level < 0:
            raise ValueError("level must be non-negative")
        if self.mode == "monte_carlo":
            ex = np.maximum(self._z2 - level, 0.0)
            ex2 = ex * ex
            n = ex.size
            return ex.mean(), ex2.mean(), float(np.mean(self._z2 > level)), ex2.std() / math.sqrt(n)
        e1, e2, p = _excess_nodes(self._d, level)
        w = self._w
        return float(w @ e1), float(w @ e2), float(w @ p), 0.0


def _excess_nodes(d: np.ndarray, a: float):
    d = np.asarray(d, dtype=float)
    e1 = np.zeros_like(d)
    e2 = np.zeros_like(d)
    p = np.zeros_like(d)
    pos = d > 0
    dp = d[pos]
    if a == 0.0:
        e1[pos] = dp
        e2[pos] = 3.0 * dp * dp
        p[pos] = 1.0
        return e1, e2, p
    s = np.sqrt(a / dp)
    q = 0.5 * special.erfc(s / _SQRT2)
    phi = _INV_SQRT2PI * np.exp(-0.5 * s * s)
    s2 = s * s
    e1[pos] = 2.0 * dp * (s * phi + (1.0 - s2) * q)
    e2[pos] = 2.0 * dp * dp * ((3.0 * s - s2 * s) * phi + (s2 * s2 - 2.0 * s2 + 3.0) * q)
    p[pos] = 2.0 * q
    # rounding can push deep-tail values a hair below zero
    np.maximum(e1, 0.0, out=e1)
    np.maximum(e2, 0.0, out=e2)
    return e1, e2, p


@numba.njit(cache=True)
def g_point(gamma: float, nu: float, z: float) -> float:
    """``max(a, z^2)^2 / 6 - gamma * max(a, z^2)`` with ``a = 3(gamma + nu)``."""
    m = max(3.0 * (gamma + nu), z * z)
    return m * m / 6.0 - gamma * m


def g_bar(ctx: AnalyticContext, gamma: float, nu: float = 0.0, return_se: bool = False):
    """Expectation of :func:`g_point` over ``Z_D``.

    Uses ``g = 3/2 (nu^2 - gamma^2) + nu e + e^2 / 6`` with
    ``e = (Z^2 - 3(gamma + nu))^+``.
    """
    if gamma < 0 or nu < 0:
        raise ValueError("gamma and nu must be non-negative")
    e1, e2, _, se = ctx.excess(3.0 * (gamma + nu))
    val = 1.5 * (nu * nu - gamma * gamma) + nu * e1 + e2 / 6.0
    if return_se:
        if ctx.mode == "monte_carlo":
            g = _g_samples(ctx, gamma, nu)
            se = g.std() / math.sqrt(g.size)
        return val, se
    return val


def _g_samples(ctx: AnalyticContext, gamma: float, nu: float) -> np.ndarray:
    m = np.maximum(3.0 * (gamma + nu), ctx._z2)
    return m * m / 6.0 - gamma * m


def expected_frame_length(ctx: AnalyticContext, tau_sq: float) -> float:
    """``E[max(tau^2, Z_D^2)]``."""
    e1, _, _, _ = ctx.excess(tau_sq)
    return tau_sq + e1


def expected_frame_quartic(ctx: AnalyticContext, tau_sq: float) -> float:
    """``E[max(tau^2, Z_D^2)^2] / 6``."""
    e1, e2, _, _ = ctx.excess(tau_sq)
    return (tau_sq * tau_sq + 2.0 * tau_sq * e1 + e2) / 6.0


def waiting_probability(ctx: AnalyticContext, tau_sq: float) -> float:
    """``Pr(Z_D^2 <= tau^2)``."""
    _, _, p, _ = ctx.excess(tau_sq)
    return 1.0 - p


def threshold_cost(ctx: AnalyticContext, tau_sq: float, weight: float) -> float:
    """``E[max(tau^2, Z^2)^2]/6 - weight * E[max(tau^2, Z^2)]``, the per-frame
    Lagrangian of a threshold policy without its constant term."""
    e1, e2, _, _ = ctx.excess(tau_sq)
    return (tau_sq * tau_sq + 2.0 * tau_sq * e1 + e2) / 6.0 - weight * (tau_sq + e1)


def gamma_bracket(model: DelayModel, f_max: float = math.inf) -> tuple[float, float]:
    """Bounds ``Dbar/6 <= gamma* <= (M + 2 Dbar/f + 1/f^2) / (2 (Dbar + 1/f))``.

    The upper end is the time-average cost of waiting a constant ``1/f_max``
    after every delivery, less ``Dbar``.
    """
    if not f_max > 0:
        raise ValueError("f_max must be positive")
    dbar, m, _ = model.moments()
    w = 0.0 if math.isinf(f_max) else 1.0 / f_max
    lo = dbar / 6.0
    if dbar + w == 0.0:
        return 0.0, 0.0
    hi = 0.5 * (m + 2.0 * dbar * w + w * w) / (dbar + w)
    return lo, hi


def constant_wait_mse(model: DelayModel, wait: float) -> float:
    """Time-average MSE of waiting ``wait`` after every delivery."""
    if wait < 0:
        raise ValueError("wait must be non-negative")
    dbar, m, _ = model.moments()
    return 0.5 * (m + 2.0 * dbar * wait + wait * wait) / (dbar + wait) + dbar


def frame_moment_table(ctx: AnalyticContext, points: int = 1500):
    """Tabulate ``l(x) = E[max(x, Z^2)]`` and ``q(x) = E[max(x, Z^2)^2] / 6``
    with their exact derivatives ``1 - P`` and ``x (1 - P) / 3`` on a
    geometric grid in ``x = tau^2`` (plus ``x = 0``), for cubic Hermite
    interpolation inside the simulation loop.
    """
    dbar = ctx.delay.mean
    lo = 1e-6 * min(dbar, 1.0) if dbar > 0 else 1e-6
    x = np.concatenate(([0.0], np.geomspace(lo, 1e8 * max(dbar, 1.0), points)))
    ls, dls, qs, dqs = (np.empty_like(x) for _ in range(4))
    for i, a in enumerate(x):
        e1, e2, p, _ = ctx.excess(float(a))
        ls[i] = a + e1
        qs[i] = (a * a + 2.0 * a * e1 + e2) / 6.0
        dls[i] = 1.0 - p
        dqs[i] = a * (1.0 - p) / 3.0
    return x, ls, dls, qs, dqs
