"""Multiplicative optimal stopping on the dyadic grid.

Value  u(x) = sup_tau ln E_x[exp(int_0^tau g(X_s) ds + G(X_tau))]  with tau a
grid stopping time, absorbed (forced stop) on leaving the domain B.  Work is
done in exponential scale where the Bellman recursion is

    e^{u'} = max(e^G, K (1_B e^u + 1_{B^c} e^G)),   K = exp(delta (Q + diag g)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConvergenceError, PreconditionError
from .operators import DomainMask, apply_M
from .propagator import feynman_kac_matrix, spectral_bound, weighted_kernel

CLASSIFY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class StoppingProblem:
    spec: object
    g: np.ndarray
    G: np.ndarray
    mask: DomainMask
    delta: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        G = np.asarray(self.G, dtype=float)
        n = self.spec.n
        if g.shape != (n,) or G.shape != (n,):
            raise PreconditionError(f"g and G must have {n} entries")
        if np.any(G > 0):
            raise PreconditionError("terminal payoff G must be <= 0")
        if not self.delta > 0:
            raise PreconditionError("delta must be positive")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "G", G)

    @property
    def kernel(self):
        K = getattr(self, "_K", None)
        if K is None:
            K = feynman_kac_matrix(self.spec.generator, self.g, self.delta)
            object.__setattr__(self, "_K", K)
        return K


def value_iteration_bounded(problem, max_sweeps=1_000_000, tol=1e-14):
    """Iterate the stopping recursion from u = G until the sup change in e^u < tol.

    Returns ``(u_B, sweeps_used)``.  Off B the value is G exactly.
    """
    eG = np.exp(problem.G)
    v, sweeps, change = _kernels.stopping_sweeps(
        problem.kernel, problem.mask.inside, eG, eG, max_sweeps, tol
    )
    if not change < tol:
        r = spectral_bound(problem.spec.generator, problem.g)
        raise ConvergenceError(
            f"stopping iteration not converged after {sweeps} sweeps (change {change:.3e}, r(g)={r:.6g})",
            sweeps=sweeps, change=change, r_g=r,
        )
    u = np.where(problem.mask.inside, np.maximum(np.log(v), problem.G), problem.G)
    return u, sweeps


def finite_horizon_value(problem, horizon_steps):
    """u^0 = G, u^{j+1} = max(G, ln K e^{u^j}) with absorption off B; returns u^N."""
    if horizon_steps < 0:
        raise PreconditionError("horizon_steps must be >= 0")
    eG = np.exp(problem.G)
    if horizon_steps == 0:
        return problem.G.copy()
    v, _, _ = _kernels.stopping_sweeps(problem.kernel, problem.mask.inside, eG, eG, int(horizon_steps), 0.0)
    return np.where(problem.mask.inside, np.maximum(np.log(v), problem.G), problem.G)


def stopping_region(problem, u, tol=1e-12):
    return np.asarray(u, dtype=float) <= problem.G + tol


def continuation_set(w, Mw, rtol=CLASSIFY_RTOL):
    """States where w exceeds Mw by more than the relative classification tolerance."""
    return (w - Mw) > rtol * np.maximum(1.0, np.abs(Mw))


@dataclass(frozen=True)
class MartingaleReport:
    max_super_violation: float
    max_mart_residual_on_continuation: float


def martingale_check(spec, solution, tol=CLASSIFY_RTOL):
    """Exact one-step check that e^{int(f - lam)} e^{w(X)} is a supermartingale on B_m
    and a martingale while w > Mw; exits from B_m are valued at Mw.
    """
    inside = spec.inside(solution.m)
    w = np.asarray(solution.w, dtype=float)
    Mw = apply_M(spec, w)[0]
    K = weighted_kernel(spec, solution.delta, solution.lambda_m_delta).matrix
    cond = K @ np.exp(np.where(inside, w, Mw))
    diff = cond - np.exp(w)
    sup = float(diff[inside].max()) if inside.any() else 0.0
    cont = inside & continuation_set(w, Mw, tol)
    mart = float(np.abs(diff[cont]).max()) if cont.any() else 0.0
    return MartingaleReport(sup, mart)


def uniform_integrability_gate(spec, g, horizons, threshold=1e-6):
    """Tail bounds sup_{tau >= T} E[e^{int g}] on a horizon grid; passes when the last is < threshold."""
    from .propagator import tail_supremum_bound

    r = spectral_bound(spec.generator, g)
    a = r / 2.0
    bounds = [tail_supremum_bound(spec, g, a, T) for T in horizons]
    return bounds, bool(bounds[-1] < threshold)


def horizon_for_tail(spec, g, eps):
    """Smallest T with tail bound below ``eps`` (using a = r(g)/2)."""
    from .propagator import resolvent_one

    r = spectral_bound(spec.generator, g)
    if not r < 0:
        raise PreconditionError(f"need r(g) < 0, got {r}")
    a = r / 2.0
    v = resolvent_one(spec, g, a)
    ratio = float(v.max() / v.min())
    return max(0.0, math.log(eps / ratio) / a)
