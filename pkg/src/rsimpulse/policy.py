"""Stationary impulse policies, their growth rates, and the brute-force oracle.

A policy maps every state to CONTINUE (encoded -1) or JUMP(xi) (encoded as
the state index xi in U).  On the grid delta its one-step matrix is

    A(x, .) = K(x, .)                  if CONTINUE
    A(x, .) = e^{c(x, xi)} K(xi, .)    if JUMP(xi)

with K = exp(delta (Q + diag f)); the long-run risk-sensitive growth is
ln rho(A) / delta.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, EnumerationCapError, PreconditionError
from .operators import apply_M
from .propagator import weighted_kernel
from .stopping import CLASSIFY_RTOL, continuation_set

CONTINUE = -1
DEFAULT_CAP = 10**6


@dataclass(frozen=True, eq=False)
class Policy:
    action: np.ndarray
    level: int | None = None

    def __post_init__(self):
        a = np.array(self.action, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "action", a)

    def encode(self, labels=None):
        if labels is None:
            return ",".join("C" if a < 0 else f"J{a}" for a in self.action)
        return ",".join("C" if a < 0 else f"J:{labels[a]}" for a in self.action)

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.action, other.action)

    def __hash__(self):
        return hash(tuple(self.action.tolist()))


def never_impulse(spec):
    return Policy(np.full(spec.n, CONTINUE))


def validate_policy(spec, policy):
    a = policy.action
    if a.shape != (spec.n,):
        raise PreconditionError(f"policy has {a.shape[0]} actions, model has {spec.n} states")
    ok = (a == CONTINUE) | np.isin(a, spec.U)
    if not ok.all():
        raise PreconditionError(f"invalid actions at states {np.nonzero(~ok)[0].tolist()}")
    if policy.level is not None:
        out = ~spec.inside(policy.level) & (a == CONTINUE)
        if out.any():
            raise PreconditionError(
                f"states {np.nonzero(out)[0].tolist()} lie outside B_{policy.level} but continue"
            )


def strategy_from_solution(spec, solution, tol=CLASSIFY_RTOL):
    """JUMP to the M-argmax where w is within ``tol`` (relative) of Mw, else CONTINUE.

    Accepts a BellmanSolution (refused when degenerate) or an EigenSolution, in
    which case states off its domain are forced to jump.
    """
    if getattr(solution, "degenerate", False):
        raise DegenerateError("no strategy for a degenerate solution")
    w = np.asarray(solution.w, dtype=float)
    Mw, arg = apply_M(spec, w)
    cont = continuation_set(w, Mw, tol)
    level = None
    if not hasattr(solution, "degenerate"):
        level = solution.m
        cont &= spec.inside(level)
        if level == spec.top_level:
            level = None
    return Policy(np.where(cont, CONTINUE, arg), level)


def policy_matrix(spec, policy, k, K=None):
    if K is None:
        K = weighted_kernel(spec, 2.0 ** -k).matrix
    a = policy.action
    src = np.where(a < 0, np.arange(spec.n), a)
    scale = np.ones(spec.n)
    jump = a >= 0
    col = {s: j for j, s in enumerate(spec.impulse_set)}
    scale[jump] = np.exp([spec.shift_cost[x, col[a[x]]] for x in np.nonzero(jump)[0]])
    return scale[:, None] * K[src]


def _spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def per_state_growth_rates(spec, policy, k, K=None):
    """Growth rate from each start state: the largest Perron root over the
    classes of A reachable from it (equal everywhere when A is irreducible)."""
    from scipy.sparse.csgraph import connected_components

    A = policy_matrix(spec, policy, k, K)
    delta = 2.0 ** -k
    ncomp, lab = connected_components(A > 0, directed=True, connection="strong")
    if ncomp == 1:
        return np.full(spec.n, math.log(_spectral_radius(A)) / delta)
    rho = np.array([_spectral_radius(A[np.ix_(lab == c, lab == c)]) for c in range(ncomp)])
    # reachability between classes via the transitive closure of the condensed graph
    C = np.zeros((ncomp, ncomp), dtype=bool)
    src, dst = np.nonzero(A > 0)
    C[lab[src], lab[dst]] = True
    np.fill_diagonal(C, True)
    for _ in range(ncomp):
        C = C | ((C.astype(np.int64) @ C.astype(np.int64)) > 0)
    best = np.array([rho[C[c]].max() for c in range(ncomp)])
    with np.errstate(divide="ignore"):
        return np.log(best[lab]) / delta


def policy_growth_rate(spec, policy, k, start=None):
    """ln rho(A_pi) / delta; with ``start`` the rate seen from that state."""
    validate_policy(spec, policy)
    if start is not None:
        return float(per_state_growth_rates(spec, policy, k)[start])
    return math.log(_spectral_radius(policy_matrix(spec, policy, k))) / 2.0 ** -k


@dataclass(frozen=True, eq=False)
class OracleResult:
    best_value: float
    best_policy: Policy
    table: list  # rows (Policy, value, per_state or None)
    k: int
    level: int | None


def enumerate_policies(spec, level=None, cap=DEFAULT_CAP):
    """All stationary policies in lexicographic order (CONTINUE sorts first)."""
    inside = spec.inside(level) if level is not None else np.ones(spec.n, dtype=bool)
    U = list(spec.impulse_set)
    choices = [([CONTINUE] + U) if inside[x] else U for x in range(spec.n)]
    total = math.prod(len(c) for c in choices)
    if total > cap:
        raise EnumerationCapError(f"{total} policies exceed the enumeration cap {cap}")
    return [np.array(p, dtype=np.int64) for p in itertools.product(*choices)]


def oracle_lambda(spec, k, level=None, cap=DEFAULT_CAP):
    """Exhaustive maximum of policy growth rates at delta = 2^-k.

    With ``level`` set, states outside B_level are forced to jump.  Ties keep
    the lexicographically first policy.
    """
    from .propagator import is_irreducible

    K = weighted_kernel(spec, 2.0 ** -k).matrix
    delta = 2.0 ** -k
    acts = enumerate_policies(spec, level, cap)
    lvl = None if level is None or level == spec.top_level else level
    pols = [Policy(a, lvl) for a in acts]
    mats = np.stack([policy_matrix(spec, p, k, K) for p in pols])
    rho = np.max(np.abs(np.linalg.eigvals(mats)), axis=1)
    values = np.log(rho) / delta
    table = []
    for p, A, v in zip(pols, mats, values):
        per = None
        if not is_irreducible(A):
            per = per_state_growth_rates(spec, p, k, K)
        table.append((p, float(v), per))
    i = int(np.argmax(values))
    return OracleResult(float(values[i]), pols[i], table, int(k), level)


@dataclass(frozen=True)
class CollapseReport:
    checked: int
    max_chain_minus_collapsed: float
    max_chain_minus_best: float


def chained_jump_check(spec, oracle):
    """Chained jumps x -> xi -> eta at one grid time never beat the direct x -> eta.

    For every tabled policy and every state whose jump target itself jumps, the
    row e^{c(x,xi) + c(xi,eta)} K(eta, .) is compared with e^{c(x,eta)} K(eta, .).
    The chained variant of the whole policy is evaluated against the collapsed
    one and against the oracle optimum.
    """
    k = oracle.k
    K = weighted_kernel(spec, 2.0 ** -k).matrix
    col = {s: j for j, s in enumerate(spec.impulse_set)}
    checked = 0
    worst_c, worst_b = -math.inf, -math.inf
    chained_mats, collapsed_mats = [], []
    for p, _, _ in oracle.table:
        a = p.action
        chain = [x for x in range(spec.n) if a[x] >= 0 and a[a[x]] >= 0]
        if not chain:
            continue
        A_ch = policy_matrix(spec, p, k, K).copy()
        collapsed = a.copy()
        for x in chain:
            xi, eta = a[x], a[a[x]]
            A_ch[x] = math.exp(spec.shift_cost[x, col[xi]] + spec.shift_cost[xi, col[eta]]) * K[eta]
            collapsed[x] = eta
        chained_mats.append(A_ch)
        collapsed_mats.append(policy_matrix(spec, Policy(collapsed), k, K))
        checked += 1
    if checked:
        d = 2.0 ** -k
        v_ch = np.log(np.max(np.abs(np.linalg.eigvals(np.stack(chained_mats))), axis=1)) / d
        v_co = np.log(np.max(np.abs(np.linalg.eigvals(np.stack(collapsed_mats))), axis=1)) / d
        worst_c = float(np.max(v_ch - v_co))
        worst_b = float(np.max(v_ch - oracle.best_value))
    return CollapseReport(checked, worst_c, worst_b)
