"""Full-problem assembly: the m-ladder, the dyadic k-ladder and degeneracy.

For each configured k the one-step problem is solved on every exhaustion set;
on a finite state set the last set is everything, so the m-limit is the value
at the top level.  The reported lambda is the value at the finest k, with the
whole (m, k) table kept for inspection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import SolverOptions, solve_one_step
from .errors import ConvergenceError, DegenerateError, PreconditionError, RSImpulseError
from .operators import DomainMask, apply_M
from .propagator import semigroup_type
from .stopping import StoppingProblem, finite_horizon_value, horizon_for_tail

DEGENERACY_MARGIN = 1e-7
MONOTONE_TOL = 1e-9
MAX_HORIZON_STEPS = 2_000_000  # near-degenerate runs would otherwise need ~1/(lambda - r) steps


@dataclass(frozen=True, eq=False)
class BellmanSolution:
    lambda_: float
    r_f: float
    degenerate: bool
    w: np.ndarray
    k: int
    ladder: list  # rows {m, k, lambda, residual, iterations}
    convergence: list  # rows from dyadic_refinement_diagnostics
    lambda_by_k: dict
    solutions: dict = field(repr=False)  # (m, k) -> EigenSolution
    margin: float = DEGENERACY_MARGIN

    @property
    def delta(self):
        return 2.0 ** -self.k

    @property
    def m(self):
        return max(m for m, _ in self.solutions)

    @property
    def lambda_m_delta(self):
        return self.lambda_


def lambda_delta(spec, k, opts=None):
    """lambda_delta = lambda^M_delta, plus the per-m list and the solutions."""
    sols = []
    for m in range(spec.top_level + 1):
        try:
            sols.append(solve_one_step(spec, m, k, opts))
        except RSImpulseError as exc:
            exc.args = (f"(m={m}, k={k}) {exc.args[0]}",) + exc.args[1:]
            raise
    per_m = [s.lambda_m_delta for s in sols]
    for a, b in zip(per_m, per_m[1:]):
        if b < a - MONOTONE_TOL:
            raise ConvergenceError(f"m-ladder not monotone at k={k}: {per_m}", per_m=per_m)
    return per_m[-1], per_m, sols


def dyadic_refinement_diagnostics(spec, solutions):
    """Gaps between consecutive k levels of the top-level solutions (sorted by k)."""
    rows = []
    for a, b in zip(solutions, solutions[1:]):
        Ma = apply_M(spec, a.w)[0]
        Mb = apply_M(spec, b.w)[0]
        rows.append({
            "k": a.k,
            "k_next": b.k,
            "lambda": a.lambda_m_delta,
            "lambda_next": b.lambda_m_delta,
            "lambda_gap": b.lambda_m_delta - a.lambda_m_delta,
            "Mw_gap": float(np.max(np.abs(Ma - Mb))),
            "w_gap": float(np.max(np.abs(a.w - b.w))),
        })
    return rows


def lambda_full(spec, opts=None, margin=DEGENERACY_MARGIN):
    if not spec.grid_levels:
        raise PreconditionError("grid_levels is empty")
    opts = opts or SolverOptions()
    ladder, sols, lam_k = [], {}, {}
    for k in spec.grid_levels:
        lam, _, per = lambda_delta(spec, k, opts)
        lam_k[k] = lam
        for s in per:
            sols[(s.m, k)] = s
            ladder.append({"m": s.m, "k": k, "lambda": s.lambda_m_delta,
                           "residual": s.residual, "iterations": s.iterations})
    r_f = semigroup_type(spec)
    top = spec.top_level
    k_fin = spec.grid_levels[-1]
    lam = lam_k[k_fin]
    degenerate = bool(lam - r_f < margin)
    if not degenerate:
        ks = list(spec.grid_levels)
        for a, b in zip(ks, ks[1:]):
            if lam_k[b] < lam_k[a] - MONOTONE_TOL:
                raise ConvergenceError(f"k-ladder not monotone: {lam_k}", lambda_by_k=lam_k)
    w = np.array(sols[(top, k_fin)].w)
    w[spec.U] -= w[spec.U].max()
    w.setflags(write=False)
    conv = dyadic_refinement_diagnostics(spec, [sols[(top, k)] for k in spec.grid_levels])
    return BellmanSolution(
        lambda_=lam, r_f=r_f, degenerate=degenerate, w=w, k=k_fin, ladder=ladder,
        convergence=conv, lambda_by_k=lam_k, solutions=sols, margin=margin,
    )


def stopping_rhs(spec, solution, horizon_steps=None, eps=1e-15):
    """ln sup_{tau <= N delta} E[e^{int(f - lam)} e^{Mw(X_tau)}] on the full set."""
    g = spec.running_cost - solution.lambda_
    G = apply_M(spec, solution.w)[0]
    if horizon_steps is None:
        T = horizon_for_tail(spec, g, eps)
        horizon_steps = min(MAX_HORIZON_STEPS, max(1, math.ceil(T / solution.delta)))
    inside = np.ones(spec.n, dtype=bool)
    prob = StoppingProblem(spec, g, G, DomainMask(spec.top_level, inside), solution.delta)
    return finite_horizon_value(prob, horizon_steps), horizon_steps


def bellman_residual(spec, solution, horizon_steps=None, allow_degenerate=False):
    """sup-norm gap between w and the stopping-route value with terminal Mw."""
    if solution.degenerate and not allow_degenerate:
        raise DegenerateError(
            f"lambda={solution.lambda_:.12g} is within {solution.margin:g} of r(f)={solution.r_f:.12g}"
        )
    if horizon_steps is None and solution.lambda_ - solution.r_f <= 0:
        raise PreconditionError("degenerate solution: pass horizon_steps explicitly")
    rhs, _ = stopping_rhs(spec, solution, horizon_steps)
    return float(np.max(np.abs(solution.w - rhs)))
