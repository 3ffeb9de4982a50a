"""Transmission-delay distributions.

A :class:`DelayModel` is immutable.  Sampling is done by a numba kernel keyed
on an integer kind code so the simulation loop can draw delays without
leaving compiled code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .kernels import RngStream

KINDS = ("deterministic", "uniform", "lognormal", "lecam", "empirical")
_CODES = {k: i for i, k in enumerate(KINDS)}


class UnsupportedModelError(ValueError):
    pass


@dataclass(frozen=True)
class DelayModel:
    """i.i.d. transmission-delay law.

    ``params`` holds ``(d,)``, ``(a, b)``, ``(mu, sigma)`` or
    ``(delta, c, k)`` depending on ``kind``; ``samples`` holds the data of an
    empirical model.  ``dlb`` is the known lower bound on the mean delay used
    by the online step size; it defaults to half the mean.
    """

    kind: str
    params: tuple = ()
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)
    dlb: float | None = None
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "deterministic":
            (d,) = p
            if d < 0:
                raise ValueError("deterministic delay must be >= 0")
        elif self.kind == "uniform":
            a, b = p
            if not 0 <= a < b:
                raise ValueError("uniform delay needs 0 <= a < b")
        elif self.kind == "lognormal":
            mu, sigma = p
            if not (math.isfinite(mu) and sigma > 0):
                raise ValueError("lognormal delay needs finite mu and sigma > 0")
        elif self.kind == "lecam":
            delta, c, k = p
            _check_lecam(delta, c, k)
        else:
            if self.samples is None:
                raise ValueError("empirical model needs samples")
            s = np.asarray(self.samples, dtype=float)
            if s.ndim != 1 or s.size == 0 or np.any(s < 0) or not np.all(np.isfinite(s)):
                raise ValueError("empirical samples must be a non-empty 1-d array of finite values >= 0")
            s = s.copy()
            s.setflags(write=False)
            object.__setattr__(self, "samples", s)
            if self.dlb is None:
                raise ValueError("empirical model requires an explicit dlb")
        if self.dlb is not None and not self.dlb > 0:
            raise ValueError("dlb must be positive")
        object.__setattr__(self, "_moments", _moments(self))

    # ---- constructors -------------------------------------------------
    @classmethod
    def deterministic(cls, d: float, **kw) -> "DelayModel":
        return cls("deterministic", (d,), **kw)

    @classmethod
    def uniform(cls, a: float, b: float, **kw) -> "DelayModel":
        return cls("uniform", (a, b), **kw)

    @classmethod
    def lognormal(cls, mu: float, sigma: float, **kw) -> "DelayModel":
        return cls("lognormal", (mu, sigma), **kw)

    @classmethod
    def lecam(cls, delta: float, c: float, k: int, **kw) -> "DelayModel":
        return cls("lecam", (delta, c, k), **kw)

    @classmethod
    def empirical(cls, samples, dlb: float, **kw) -> "DelayModel":
        return cls("empirical", (), samples=np.asarray(samples, dtype=float), dlb=dlb, **kw)

    # ---- moments ------------------------------------------------------
    @property
    def mean(self) -> float:
        return self._moments[0]

    @property
    def second_moment(self) -> float:
        return self._moments[1]

    @property
    def fourth_moment(self) -> float:
        return self._moments[2]

    @property
    def mean_lower_bound(self) -> float:
        return self.dlb if self.dlb is not None else self.mean / 2.0

    def moments(self) -> tuple[float, float, float]:
        """``(E[D], E[D^2], E[D^4])``."""
        return self._moments

    # ---- sampling -----------------------------------------------------
    def _kernel_args(self):
        table = self.samples if self.samples is not None else np.zeros(1)
        return _CODES[self.kind], np.array(self.params + (0.0,) * (3 - len(self.params))), table

    def sample(self, rng: RngStream, size: int | None = None):
        code, params, table = self._kernel_args()
        if size is None:
            return float(_sample_one(rng.generator, code, params, table))
        return _sample_many(rng.generator, code, params, table, int(size))

    def spec(self) -> str:
        """CLI spec string; round-trips through :func:`parse_delay`."""
        if self.kind == "deterministic":
            return f"det:{self.params[0]!r}"
        if self.kind == "uniform":
            return "uniform:{!r},{!r}".format(*self.params)
        if self.kind == "lognormal":
            return "lognormal:{!r},{!r}".format(*self.params)
        if self.kind == "lecam":
            d, c, k = self.params
            return f"lecam:{d!r},{c!r},{int(k)}"
        return f"empirical:{self.source}"


def _check_lecam(delta, c, k):
    if not 0 < delta < 1:
        raise ValueError("lecam delta must lie in (0, 1)")
    if not (0 <= c <= 0.5):
        raise ValueError("lecam c must lie in [0, 1/2]")
    if k < 1 or k != int(k):
        raise ValueError("lecam k must be an integer >= 1")


def lecam_density(delta: float, c: float, k: int, x):
    """Perturbed uniform density on ``[0, 1]``.

    Mass ``c/sqrt(k)`` per unit length is moved from ``[0, delta/2]`` to
    ``(1 - delta/2, 1]``.
    """
    _check_lecam(delta, c, k)
    eps = c * math.sqrt(1.0 / k)
    x = np.asarray(x, dtype=float)
    out = np.where(
        x <= delta / 2, 1.0 - eps, np.where(x <= 1 - delta / 2, 1.0, 1.0 + eps)
    )
    out = np.where((x < 0) | (x > 1), 0.0, out)
    return float(out) if out.ndim == 0 else out


def _lecam_pieces(delta, c, k):
    """Piecewise-constant segments ``(lo, hi, density)`` of the lecam law."""
    eps = c * math.sqrt(1.0 / k)
    return (
        (0.0, delta / 2, 1.0 - eps),
        (delta / 2, 1.0 - delta / 2, 1.0),
        (1.0 - delta / 2, 1.0, 1.0 + eps),
    )


def _moments(model: DelayModel) -> tuple[float, float, float]:
    p = model.params
    if model.kind == "deterministic":
        d = p[0]
        return d, d**2, d**4
    if model.kind == "uniform":
        a, b = p
        raw = lambda n: (b ** (n + 1) - a ** (n + 1)) / ((n + 1) * (b - a))
        return raw(1), raw(2), raw(4)
    if model.kind == "lognormal":
        mu, s = p
        raw = lambda n: math.exp(n * mu + n * n * s * s / 2)
        return raw(1), raw(2), raw(4)
    if model.kind == "lecam":
        tot = [0.0, 0.0, 0.0]
        for lo, hi, dens in _lecam_pieces(*p):
            for i, n in enumerate((1, 2, 4)):
                tot[i] += dens * (hi ** (n + 1) - lo ** (n + 1)) / (n + 1)
        return tuple(tot)
    s = model.samples
    return float(s.mean()), float(np.mean(s**2)), float(np.mean(s**4))


def parse_delay(text: str, dlb: float | None = None) -> DelayModel:
    """Parse ``det:d``, ``uniform:a,b``, ``lognormal:mu,sigma``,
    ``lecam:delta,c,k`` or ``empirical:path.csv``."""
    try:
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind in ("det", "deterministic"):
            return DelayModel.deterministic(float(arg), dlb=dlb)
        if kind == "uniform":
            a, b = (float(v) for v in arg.split(","))
            return DelayModel.uniform(a, b, dlb=dlb)
        if kind == "lognormal":
            mu, sigma = (float(v) for v in arg.split(","))
            return DelayModel.lognormal(mu, sigma, dlb=dlb)
        if kind == "lecam":
            d, c, k = arg.split(",")
            return DelayModel.lecam(float(d), float(c), int(k), dlb=dlb)
        if kind == "empirical":
            data = np.loadtxt(Path(arg), dtype=float, ndmin=1, delimiter=",")
            return DelayModel.empirical(data.ravel(), dlb=dlb, source=arg)
    except (ValueError, OSError) as exc:
        raise ValueError(f"cannot parse delay spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown delay spec {text!r}")


# --------------------------------------------------------------------------
# numba samplers


@numba.njit(cache=True)
def _sample_one(rng, code, params, table):
    if code == 0:
        return params[0]
    if code == 1:
        return params[0] + (params[1] - params[0]) * rng.random()
    if code == 2:
        return math.exp(params[0] + params[1] * rng.standard_normal())
    if code == 3:
        # inverse CDF of the three-piece density
        delta = params[0]
        eps = params[1] * math.sqrt(1.0 / params[2])
        u = rng.random()
        m0 = 0.5 * delta * (1.0 - eps)
        m1 = m0 + (1.0 - delta)
        if u < m0:
            return u / (1.0 - eps)
        if u < m1:
            return 0.5 * delta + (u - m0)
        return 1.0 - 0.5 * delta + (u - m1) / (1.0 + eps)
    return table[rng.integers(0, table.shape[0])]


@numba.njit(cache=True)
def _sample_many(rng, code, params, table, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = _sample_one(rng, code, params, table)
    return out
