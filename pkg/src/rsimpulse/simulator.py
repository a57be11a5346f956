"""Monte Carlo estimate of the risk-sensitive functional under a stationary policy.

Each trajectory is an exact event-driven CTMC path.  The accumulated exponent
is  Z_T = int_0^T f(Y_s) ds + sum of shift costs  and the estimate is
(1/T) ln mean exp(Z_T), computed with log-sum-exp.  Impulses happen at grid
times j * 2^-k (t = 0 included by default) or, in jump-time mode, right after
CTMC jumps.

Random numbers come from a counter-based stream keyed by (seed, trajectory
index), so results do not depend on chunking or on the numba/numpy backend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import PreconditionError
from .policy import validate_policy

JUMP_MODE_RING = 4096
DEFAULT_TRACE_CAP = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    trajectories: int
    seed: int = 0
    start: int = 0
    k: int = 0
    decide_at_zero: bool = True
    jump_time_mode: bool = False
    bootstrap: int = 1000
    chunk: int = 50_000

    def __post_init__(self):
        if not self.horizon > 0:
            raise PreconditionError("horizon must be positive")
        if self.trajectories < 1:
            raise PreconditionError("need at least one trajectory")
        if self.k < 0:
            raise PreconditionError("grid exponent must be nonnegative")

    @property
    def delta(self):
        return 2.0 ** -self.k

    @property
    def last_grid_index(self):
        return int(math.floor(self.horizon / self.delta + 1e-9))


@dataclass(frozen=True, eq=False)
class JEstimate:
    point: float
    stderr: float
    impulse_count_stats: dict
    max_burst: int
    horizon: float
    trajectories: int
    ladder: list = field(default_factory=list)  # rows {T, point, stderr}
    exponents: np.ndarray | None = field(default=None, repr=False)


def _tables(spec, policy):
    Q = spec.generator
    n = spec.n
    q = 0.0 - np.diag(Q)  # avoids -0.0 for absorbing states
    P = np.where(np.eye(n, dtype=bool), 0.0, Q)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(q[:, None] > 0, P / np.where(q > 0, q, 1.0)[:, None], 0.0)
    cum = np.cumsum(P, axis=1)
    for x in range(n):
        pos = np.nonzero(P[x] > 0)[0]
        if pos.size:
            cum[x, pos[-1]:] = 1.0
    target = np.asarray(policy.action, dtype=np.int64)
    col = {s: j for j, s in enumerate(spec.impulse_set)}
    cost = np.array([spec.shift_cost[x, col[t]] if t >= 0 else 0.0 for x, t in enumerate(target)])
    return q, cum, spec.running_cost, cost, target


def _ring_cap(config):
    if config.jump_time_mode:
        return JUMP_MODE_RING
    return int(2 ** config.k) + 2


def _run(spec, policy, config, first, count, ckpt, trace_cap=0):
    validate_policy(spec, policy)
    if not 0 <= config.start < spec.n:
        raise PreconditionError(f"start state {config.start} out of range")
    q, cum, f, cost, target = _tables(spec, policy)
    return _kernels.simulate(
        q, cum, f, cost, target, config.start, config.delta, config.horizon,
        config.decide_at_zero, config.jump_time_mode, config.seed, first, count,
        np.asarray(ckpt, dtype=np.int64), _ring_cap(config), trace_cap,
    )


def sample_trajectory(spec, policy, config, trajectory_index):
    """Return ``(exponent, impulse_times)`` for one trajectory."""
    cap = DEFAULT_TRACE_CAP if config.jump_time_mode else config.last_grid_index + 2
    Z, counts, _, trace = _run(spec, policy, config, int(trajectory_index), 1, [], cap)
    n = int(min(counts[0], cap))
    return float(Z[0, -1]), trace[0, :n].tolist()


def simulate_exponents(spec, policy, config, ladder_times=()):
    """Exponents for all trajectories, chunked.

    Returns ``(Z, counts, bursts)`` with ``Z[:, -1]`` at the horizon and earlier
    columns at ``ladder_times`` (rounded down to grid indices).
    """
    ckpt = sorted({j for j in (int(math.floor(t / config.delta + 1e-9)) for t in ladder_times
                               if t < config.horizon) if 0 < j < config.last_grid_index + 1})
    N = config.trajectories
    Z = np.empty((N, len(ckpt) + 1))
    counts = np.empty(N, dtype=np.int64)
    bursts = np.empty(N, dtype=np.int64)
    for s in range(0, N, config.chunk):
        e = min(N, s + config.chunk)
        z, c, b, _ = _run(spec, policy, config, s, e - s, ckpt)
        Z[s:e], counts[s:e], bursts[s:e] = z, c, b
    times = [j * config.delta for j in ckpt]
    return Z, counts, bursts, times


def log_mean_exp_rate(z, T):
    return float((logsumexp(z) - math.log(z.size)) / T)


def bootstrap_stderr(z, T, resamples, seed):
    """Nonparametric bootstrap standard error of the log-mean-exp rate."""
    if resamples <= 1 or z.size == 1:
        return 0.0
    if np.all(z == z[0]):
        return 0.0
    rng = np.random.default_rng(seed)
    N = z.size
    stats = np.empty(resamples)
    for b in range(resamples):
        stats[b] = log_mean_exp_rate(z[rng.integers(0, N, N)], T)
    return float(np.std(stats, ddof=1))


def estimate_J(spec, policy, config, ladder_times=None, keep_exponents=False):
    """(1/T) log-mean-exp of the exponent with a bootstrap standard error.

    ``ladder_times`` adds estimates at shorter horizons of the same paths
    (default T/8, T/4, T/2).
    """
    if ladder_times is None:
        ladder_times = (config.horizon / 8, config.horizon / 4, config.horizon / 2)
    Z, counts, bursts, times = simulate_exponents(spec, policy, config, ladder_times)
    T = config.horizon
    zT = Z[:, -1]
    point = log_mean_exp_rate(zT, T)
    se = bootstrap_stderr(zT, T, config.bootstrap, config.seed)
    ladder = []
    for i, t in enumerate(times):
        ladder.append({"T": t, "point": log_mean_exp_rate(Z[:, i], t),
                       "stderr": bootstrap_stderr(Z[:, i], t, min(config.bootstrap, 200), config.seed)})
    ladder.append({"T": T, "point": point, "stderr": se})
    rates = counts / T
    stats = {"min": float(rates.min()), "mean": float(rates.mean()), "max": float(rates.max())}
    return JEstimate(point, se, stats, int(bursts.max()), T, config.trajectories, ladder,
                     zT.copy() if keep_exponents else None)


@dataclass(frozen=True)
class AdmissibilityStats:
    min_rate: float
    mean_rate: float
    max_rate: float
    max_count: int
    max_burst: int
    rate_cap: float
    count_cap: int | None


def admissibility_stats(spec, policy, config):
    """Impulse counts per unit time and the largest number in any unit window.

    In grid mode at most one impulse happens per grid time, so a path carries
    at most floor(T / delta) + 1 impulses; this bound is asserted.
    """
    _, counts, bursts, _ = simulate_exponents(spec, policy, config)
    T = config.horizon
    rates = counts / T
    count_cap = None
    if not config.jump_time_mode:
        count_cap = config.last_grid_index + (1 if config.decide_at_zero else 0)
        assert counts.max() <= count_cap, "more impulses than grid decision times"
        assert bursts.max() <= int(2 ** config.k), "burst above grid bound"
    return AdmissibilityStats(
        float(rates.min()), float(rates.mean()), float(rates.max()), int(counts.max()),
        int(bursts.max()), 1.0 / config.delta, count_cap,
    )
