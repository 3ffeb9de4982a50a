"""Renewal-frame simulation loop and MSE / regret accounting.

Frame ``k`` runs from sampling epoch ``S_k`` to ``S_{k+1} = S_k + D_k + W_k``.
With ``p`` the frame increment of the previous frame, the realized error in
frame ``k`` is::

    E_k = p^2 D_k + 2 p int_0^D Z dt + int_0^L Z^2 dt

where ``Z`` is the signal relative to ``X_{S_k}``.  Alongside this path
estimator the loop keeps ``p^2 D_k + Z_L^4 / 6``, which has the same mean
(the cross term is a zero-mean integral and ``int Z^2`` has the mean of
``Z_L^4 / 6`` for a stopping time) and much smaller variance.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .analytic import AnalyticContext, frame_moment_table
from .delays import DelayModel, _sample_one
from .kernels import (
    MAX_DELAY_NODES,
    RngStream,
    _default_step,
    _simulate_frame,
)
from .policies import (
    CONSTANT_WAIT,
    ONLINE,
    THRESHOLD,
    ConstantWaitPolicy,
    FrameRecord,
    OnlinePolicy,
    ThresholdPolicy,
    rm_update,
)
from .solver import OptimalSolution

COLUMNS = (
    "k", "S_k", "D_k", "W_k", "L_k", "gamma_k", "nu_k", "U_k",
    "deltaX_delivery", "deltaX_frame", "prev_deltaX", "err_path", "err_mart",
    "cum_err", "cum_err_mart", "S_next", "cum_err_cond", "cum_len_cond",
)
_COL = {c: i for i, c in enumerate(COLUMNS)}
CSV_COLUMNS = (
    "k", "S_k", "D_k", "W_k", "L_k", "gamma_k", "nu_k", "U_k",
    "deltaX_delivery", "deltaX_frame", "err_path", "err_mart", "cum_err",
    "timeavg_mse", "regret",
)
# per-frame sums kept for every frame, recorded or not
SUMS = (
    "L", "L_sq", "W", "W_sq", "err_path", "err_path_sq", "err_mart", "err_mart_sq",
    "err_diff_sq", "frame4", "frame4_sq", "frame2", "frame2_sq", "pi2", "pi2_sq",
    "pi1", "pi1_sq",
)
FULL_RECORD_LIMIT = 10**5
ESTIMATORS = ("conditional", "mart", "path")
N_CHECKPOINTS = 512


class SimulationError(RuntimeError):
    pass


def checkpoint_index(frames: int, limit: int = FULL_RECORD_LIMIT, points: int = N_CHECKPOINTS) -> np.ndarray:
    """Zero-based frame indices to record: every frame up to ``limit``,
    otherwise ``points`` log-spaced frames including the last."""
    if frames <= limit:
        return np.arange(frames, dtype=np.int64)
    idx = np.unique(np.round(np.logspace(0, math.log10(frames), points)).astype(np.int64)) - 1
    return idx[(idx >= 0) & (idx < frames)]


@numba.njit(cache=True)
def _free_frame(rng, delay, wait, step, max_nodes):
    """A frame whose length ignores the signal: free Brownian path on [0, D + w]."""
    x = 0.0
    i1 = 0.0
    i2 = 0.0
    i1_delay = 0.0
    z_delay = 0.0
    for part in range(2):
        span = delay if part == 0 else wait
        if span > 0.0:
            n = int(math.ceil(span / step))
            if n < 1:
                n = 1
            if n > max_nodes:
                n = max_nodes
            h = span / n
            sh = math.sqrt(h)
            for _ in range(n):
                xn = x + sh * rng.standard_normal()
                i1 += 0.5 * h * (x + xn)
                i2 += 0.5 * h * (x * x + xn * xn)
                x = xn
        if part == 0:
            z_delay = x
            i1_delay = i1
    return wait, z_delay, x, i1, i2, i1_delay


@numba.njit(cache=True)
def _hermite(x, xs, fs, dfs):
    """Cubic Hermite interpolation on the table (``x`` inside its range)."""
    j = np.searchsorted(xs, x, side="right") - 1
    if j < 0:
        j = 0
    h = xs[j + 1] - xs[j]
    t = (x - xs[j]) / h
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * fs[j] + (t3 - 2 * t2 + t) * h * dfs[j]
            + (-2 * t3 + 3 * t2) * fs[j + 1] + (t3 - t2) * h * dfs[j + 1])


@numba.njit(cache=True, nogil=True)
def _run(rng, dcode, dparams, dtable, kind, tau_fixed, wait_fixed, V, alpha, dlb,
         inv_fmax, step_cap, max_nodes, frames, rec_idx, out, sums,
         tab_x, tab_l, tab_dl, tab_q, tab_dq, dbar, const_l, const_q):
    """Simulate ``frames`` frames; returns 0 or the 1-based frame that went non-finite."""
    gamma = 0.0
    U = 0.0
    S = 0.0
    prev = 0.0
    cum = 0.0
    cum_m = 0.0
    cum_c = 0.0
    len_c = 0.0
    l_prev = 0.0
    r = 0
    nrec = rec_idx.shape[0]
    for i in range(frames):
        k = i + 1
        nu = max(U, 0.0) / V
        D = _sample_one(rng, dcode, dparams, dtable)
        if kind == 2:
            w, zd, ex, i1, i2, i1d = _free_frame(rng, D, wait_fixed, min(step_cap, 0.01), max_nodes)
            l_now = const_l
            q_now = const_q
        else:
            if kind == 0:
                tau = math.sqrt(3.0 * (gamma + nu))
            else:
                tau = tau_fixed
            w, zd, ex, i1, i2, i1d = _simulate_frame(rng, D, tau, _default_step(tau, step_cap), max_nodes)
            t2 = tau * tau
            if t2 < tab_x[-1]:
                l_now = _hermite(t2, tab_x, tab_l, tab_dl)
                q_now = _hermite(t2, tab_x, tab_q, tab_dq)
            else:
                # far above every delay's spread the wait is certain
                l_now = t2
                q_now = t2 * t2 / 6.0
        L = D + w
        ep = prev * prev * D + 2.0 * prev * i1d + i2
        if ep < 0.0:
            ep = 0.0
        ex2 = ex * ex
        f4 = ex2 * ex2 / 6.0
        em = prev * prev * D + f4
        cum += ep
        cum_m += em
        # conditional mean of the frame error and length given the past
        cum_c += dbar * l_prev + q_now
        len_c += l_now
        l_prev = l_now
        S_next = S + L
        if not (math.isfinite(S_next) and math.isfinite(cum) and math.isfinite(cum_m) and math.isfinite(gamma)):
            return k
        sums[0] += L
        sums[1] += L * L
        sums[2] += w
        sums[3] += w * w
        sums[4] += ep
        sums[5] += ep * ep
        sums[6] += em
        sums[7] += em * em
        sums[8] += (ep - em) * (ep - em)
        sums[9] += f4
        sums[10] += f4 * f4
        sums[11] += ex2
        sums[12] += ex2 * ex2
        sums[13] += i2
        sums[14] += i2 * i2
        sums[15] += i1
        sums[16] += i1 * i1
        if r < nrec and rec_idx[r] == i:
            out[r, 0] = k
            out[r, 1] = S
            out[r, 2] = D
            out[r, 3] = w
            out[r, 4] = L
            out[r, 5] = gamma
            out[r, 6] = nu
            out[r, 7] = U
            out[r, 8] = zd
            out[r, 9] = ex
            out[r, 10] = prev
            out[r, 11] = ep
            out[r, 12] = em
            out[r, 13] = cum
            out[r, 14] = cum_m
            out[r, 15] = S_next
            out[r, 16] = cum_c
            out[r, 17] = len_c
            r += 1
        if kind == 0:
            gamma, U = rm_update(gamma, nu, U, k, alpha, dlb, inv_fmax, zd, L)
        S = S_next
        prev = ex
    return 0


@dataclass
class TraceSeries:
    """One replication: recorded frames plus running sums over all frames."""

    data: np.ndarray
    sums: dict
    frames: int
    replication: int
    seed: int
    policy: str
    delay_spec: str
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "timeavg_mse":
            return self.data[:, _COL["cum_err"]] / self.data[:, _COL["S_next"]]
        return self.data[:, _COL[name]]

    @property
    def k(self) -> np.ndarray:
        return self.data[:, 0].astype(np.int64)

    @property
    def total_time(self) -> float:
        return float(self.data[-1, _COL["S_next"]])

    @property
    def time_average_mse(self) -> float:
        return float(self.data[-1, _COL["cum_err"]] / self.data[-1, _COL["S_next"]])

    def mean_se(self, name: str) -> tuple[float, float]:
        """Mean and standard error over all frames of a summed quantity."""
        n = self.frames
        s, s2 = self.sums[name], self.sums[name + "_sq"]
        mean = s / n
        var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        return mean, math.sqrt(var / n)

    def frame_records(self):
        for row in self.data:
            yield FrameRecord(
                k=int(row[0]), S=row[1], D=row[2], W=row[3], L=row[4],
                deltaX_delivery=row[8], deltaX_frame=row[9], prev_deltaX_frame=row[10],
                error_path=row[11], error_mart=row[12], gamma=row[5], nu=row[6], U=row[7],
            )

    def to_csv(self, fh, mse_opt: float | None = None) -> None:
        """Write the recorded frames.  ``regret`` is this replication's
        conditional regret realization (blank without ``mse_opt``)."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        tavg = self["timeavg_mse"]
        for j, row in enumerate(self.data):
            vals = [int(row[0])] + [repr(float(row[_COL[c]])) for c in CSV_COLUMNS[1:12]]
            vals.append(repr(float(row[_COL["cum_err"]])))
            vals.append(repr(float(tavg[j])))
            if mse_opt is None:
                vals.append("")
            else:
                vals.append(repr(float(row[_COL["cum_err_cond"]] - mse_opt * row[_COL["cum_len_cond"]])))
            w.writerow(vals)

    def csv_text(self, mse_opt: float | None = None) -> str:
        buf = io.StringIO()
        self.to_csv(buf, mse_opt)
        return buf.getvalue()


@functools.lru_cache(maxsize=16)
def _moment_table(model: DelayModel):
    return frame_moment_table(AnalyticContext(model))


def _policy_args(policy):
    if isinstance(policy, OnlinePolicy):
        return ONLINE, 0.0, 0.0
    if isinstance(policy, ThresholdPolicy):
        return THRESHOLD, policy.tau, 0.0
    if isinstance(policy, ConstantWaitPolicy):
        return CONSTANT_WAIT, 0.0, policy.wait
    raise TypeError(f"unsupported policy {policy!r}")


def run_trace(
    model: DelayModel,
    policy,
    frames: int,
    rng: RngStream,
    step_cap: float = math.inf,
    max_delay_nodes: int = MAX_DELAY_NODES,
    record: np.ndarray | None = None,
) -> TraceSeries:
    """Simulate ``frames`` renewal frames under ``policy``.

    ``step_cap`` bounds the per-frame waiting step ``tau^2 / 400``.
    ``record`` selects zero-based frames to store (default
    :func:`checkpoint_index`).
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    kind, tau, wait = _policy_args(policy)
    V, alpha, dlb, inv_fmax = 1.0, 1.0, 1.0, 0.0
    if kind == ONLINE:
        st = policy.initial_state(model.mean_lower_bound)
        V, alpha, dlb, inv_fmax = st.V, st.alpha, st.dlb, st.inv_fmax
    rec = checkpoint_index(frames) if record is None else np.asarray(record, dtype=np.int64)
    if rec.size == 0 or np.any(np.diff(rec) <= 0) or rec[0] < 0 or rec[-1] >= frames:
        raise ValueError("record must be increasing frame indices within range")
    out = np.zeros((rec.size, len(COLUMNS)))
    sums = np.zeros(len(SUMS))
    code, params, table = model._kernel_args()
    cap = float(step_cap) if math.isfinite(step_cap) else 1e300
    dbar, m2, _ = model.moments()
    const_l = dbar + wait
    const_q = 0.5 * (m2 + 2.0 * dbar * wait + wait * wait)
    bad = _run(rng.generator, code, params, table, kind, float(tau), float(wait), float(V),
               float(alpha), float(dlb), float(inv_fmax), cap, int(max_delay_nodes),
               int(frames), rec, out, sums, *_moment_table(model), dbar, const_l, const_q)
    if bad:
        raise SimulationError(
            f"non-finite state at frame {bad} (policy={policy.name}, delay={model.spec()}, "
            f"seed={rng.seed}, replication={rng.stream_id})"
        )
    return TraceSeries(
        data=out,
        sums=dict(zip(SUMS, sums.tolist())),
        frames=int(frames),
        replication=rng.stream_id,
        seed=rng.seed,
        policy=policy.name,
        delay_spec=model.spec(),
    )


def run_replications(
    model: DelayModel,
    policy,
    frames: int,
    reps: int,
    seed: int,
    workers: int = 1,
    **kw,
) -> list[TraceSeries]:
    """Replication ``r`` uses stream ``(seed, r)``; output order is by ``r``."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    _moment_table(model)  # build once before any worker thread needs it
    job = lambda r: run_trace(model, policy, frames, RngStream(seed, r), **kw)
    if workers <= 1:
        return [job(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(job, range(reps)))


# --------------------------------------------------------------------------
# per-frame error estimators


def frame_error_path(exit_sample, prev_deltaX: float, D: float) -> float:
    """Realized ``int (X_t - Xhat_t)^2 dt`` over the frame."""
    e = prev_deltaX * prev_deltaX * D + 2.0 * prev_deltaX * exit_sample.delay_integral_1 + exit_sample.path_integral_2
    return max(e, 0.0)


def frame_error_mart(deltaX_frame: float, prev_deltaX: float, D: float) -> float:
    """Unbiased frame-error statistic ``p^2 D + deltaX_frame^4 / 6``."""
    return prev_deltaX * prev_deltaX * D + deltaX_frame**4 / 6.0


# --------------------------------------------------------------------------
# aggregation


def _check_aligned(traces):
    if not traces:
        raise ValueError("no traces")
    spec = traces[0].delay_spec
    k0 = traces[0].k
    for t in traces[1:]:
        if t.delay_spec != spec:
            raise ValueError(f"mismatched delay models: {spec!r} vs {t.delay_spec!r}")
        if t.k.shape != k0.shape or np.any(t.k != k0):
            raise ValueError("traces were recorded at different frames")
    return k0


@dataclass
class RegretSeries:
    k: np.ndarray
    regret: np.ndarray
    se: np.ndarray
    mse_opt: float


def regret_per_trace(trace: TraceSeries, mse_opt: float, estimator: str = "conditional") -> np.ndarray:
    """One replication's regret realization at its recorded frames."""
    if estimator == "conditional":
        return trace["cum_err_cond"] - mse_opt * trace["cum_len_cond"]
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    col = "cum_err_mart" if estimator == "mart" else "cum_err"
    return trace[col] - mse_opt * trace["S_next"]


def regret_series(
    traces: list[TraceSeries], sol: OptimalSolution, estimator: str = "conditional"
) -> RegretSeries:
    """``Delta_k = mean_r[cum error through S_{k+1}] - mse_opt * mean_r[S_{k+1}]``.

    All three estimators are unbiased for ``Delta_k``.  ``path`` and
    ``mart`` use the realized frames.  ``conditional`` replaces each
    frame's error and length by their means given the learner state at
    the start of the frame (``Dbar l(tau_{j-1}^2) + q(tau_j^2)`` and
    ``l(tau_j^2)``); only the threshold trajectory stays random, which
    removes the delay-tail noise that swamps the other two.
    """
    k = _check_aligned(traces)
    if sol.delay_spec is not None and sol.delay_spec != traces[0].delay_spec:
        raise ValueError(f"solution is for {sol.delay_spec!r}, traces for {traces[0].delay_spec!r}")
    per = np.stack([regret_per_trace(t, sol.mse_opt, estimator) for t in traces])
    r = per.shape[0]
    se = per.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.full(k.shape, np.nan)
    return RegretSeries(k=k, regret=per.mean(axis=0), se=se, mse_opt=sol.mse_opt)


@dataclass
class ConstraintReport:
    k: np.ndarray
    running_interval: np.ndarray
    target: float

    def feasibility_index(self, fraction: float = 0.98) -> int | None:
        """First ``k`` from which the running mean interval stays at or above
        ``fraction * target``; None if it never settles."""
        ok = self.running_interval >= fraction * self.target
        if not ok[-1]:
            return None
        bad = np.flatnonzero(~ok)
        return int(self.k[0] if bad.size == 0 else self.k[bad[-1] + 1])


def constraint_report(traces: list[TraceSeries], f_max: float) -> ConstraintReport:
    """Replication-averaged running mean frame length ``S_{k+1} / k``."""
    if not (f_max > 0 and math.isfinite(f_max)):
        raise ValueError("constraint report needs a finite f_max")
    k = _check_aligned(traces)
    s = np.mean([t["S_next"] for t in traces], axis=0)
    return ConstraintReport(k=k, running_interval=s / k, target=1.0 / f_max)


def summarize(traces: list[TraceSeries], sol: OptimalSolution | None = None) -> dict:
    """Per-checkpoint replication means and standard errors as a JSON-able dict."""
    k = _check_aligned(traces)
    r = len(traces)
    out = {"frames": traces[0].frames, "replications": r, "policy": traces[0].policy,
           "delay": traces[0].delay_spec, "seed": traces[0].seed, "k": k.tolist()}

    def stat(arrs):
        a = np.stack(arrs)
        se = a.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros(a.shape[1])
        return {"mean": a.mean(axis=0).tolist(), "se": se.tolist()}

    out["timeavg_mse"] = stat([t["timeavg_mse"] for t in traces])
    out["gamma_k"] = stat([t["gamma_k"] for t in traces])
    out["nu_k"] = stat([t["nu_k"] for t in traces])
    out["running_interval"] = stat([t["S_next"] / k for t in traces])
    if sol is not None:
        reg = regret_series(traces, sol)
        out["mse_opt"] = sol.mse_opt
        out["regret"] = {"mean": reg.regret.tolist(), "se": reg.se.tolist()}
    return out


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=1, sort_keys=True)
