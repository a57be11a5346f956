"""Feynman-Kac weighted transition kernels, semigroup type and resolvent.

Every expectation E_x[exp(int_0^t (g(X_s) - a) ds) h(X_t)] on a finite chain is
``exp(t (Q + diag(g - a))) @ h``.  The exponential is built by uniformization
so that the kernel is nonnegative by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import KernelOverflowError, PreconditionError

POISSON_TAIL = 1e-15
CW_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class WeightedKernel:
    delta: float
    shift: float
    matrix: np.ndarray


def metzler_exp(A, t):
    """exp(t A) for a Metzler matrix ``A`` by uniformization with squaring.

    With beta >= max|A_xx| the matrix P = I + A/beta is entrywise nonnegative and
    exp(tA) = exp(-beta t) sum_j (beta t)^j / j! P^j.  The horizon is halved
    until beta*t <= 1 so the Poisson series is short, then squared back up.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if t == 0.0 or n == 0:
        return np.eye(n)
    beta = float(np.max(np.abs(np.diag(A)))) if n else 0.0
    if beta == 0.0:
        off = A - np.diag(np.diag(A))
        if not off.any():
            return np.eye(n)
        beta = float(np.max(off.sum(axis=1)))
    P = np.eye(n) + A / beta
    np.maximum(P, 0.0, out=P)  # clip -0.0 from diagonal cancellation

    squarings = max(0, math.ceil(math.log2(beta * t))) if beta * t > 1.0 else 0
    s = beta * t / 2.0 ** squarings

    term = np.eye(n)
    weight = math.exp(-s)
    out = weight * term
    j = 0
    while j < 200:
        j += 1
        term = term @ P
        weight *= s / j
        contrib = weight * term
        out += contrib
        # s <= 1, so later terms shrink factorially; stop once they are below rounding
        if contrib.max() <= POISSON_TAIL * 1e-2 * out.max():
            break
    for _ in range(squarings):
        out = out @ out
    return out


def feynman_kac_matrix(generator, rate, t):
    """exp(t (Q + diag(rate)))."""
    Q = np.asarray(generator, dtype=float)
    A = Q + np.diag(np.asarray(rate, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        K = metzler_exp(A, t)
    if not np.all(np.isfinite(K)):
        mag = t * float(np.max(np.abs(rate))) if len(rate) else 0.0
        raise KernelOverflowError(f"kernel overflow: t*max|rate| = {mag:.6g}")
    return K


def weighted_kernel(spec, delta, shift=0.0):
    """Kernel K(x, y) = [exp(delta (Q + diag(f - shift)))](x, y)."""
    if not delta > 0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    K = feynman_kac_matrix(spec.generator, spec.running_cost - shift, float(delta))
    K.setflags(write=False)
    return WeightedKernel(float(delta), float(shift), K)


# ---------------------------------------------------------------------------
# spectral quantities
# ---------------------------------------------------------------------------


def is_irreducible(A):
    """Zero-pattern irreducibility of a square matrix (off-diagonal graph)."""
    from scipy.sparse.csgraph import connected_components

    n = A.shape[0]
    if n <= 1:
        return True
    adj = (np.asarray(A) != 0) & ~np.eye(n, dtype=bool)
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    return ncomp == 1


def perron_root(B, tol=CW_TOL, max_iters=200_000):
    """Spectral radius of a nonnegative matrix.

    Power iteration with a Collatz-Wielandt stopping rule when the matrix is
    positive enough for the bracket to exist; otherwise a dense eigensolve.
    Returns ``(rho, vector_or_None)``.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    if n == 1:
        return float(B[0, 0]), np.ones(1)
    if is_irreducible(B):
        h = np.ones(n)
        for _ in range(max_iters):
            g = B @ h
            if not np.all(g > 0):
                break
            r = g / h
            lo, hi = r.min(), r.max()
            h = g / g.max()
            if hi - lo <= tol * hi:
                return float(np.sqrt(lo * hi)), h
    return float(np.max(np.abs(np.linalg.eigvals(B)))), None


def spectral_bound(generator, rate):
    """Largest real eigenvalue of the Metzler matrix Q + diag(rate)."""
    A = np.asarray(generator, dtype=float) + np.diag(np.asarray(rate, dtype=float))
    if is_irreducible(A):
        rho, _ = perron_root(feynman_kac_matrix(generator, rate, 1.0))
        if rho > 0:
            return math.log(rho)
    return float(np.max(np.linalg.eigvals(A).real))


def semigroup_type(spec):
    """r(f): exponential growth rate of E_x[exp(int_0^t f(X_s) ds)]."""
    r = spectral_bound(spec.generator, spec.running_cost)
    if np.all(spec.running_cost <= 0):
        assert r <= 1e-12, f"semigroup type {r} > 0 for non-positive running cost"
    return r


# ---------------------------------------------------------------------------
# resolvent and tail bound
# ---------------------------------------------------------------------------


def resolvent_one(spec, g, a):
    """v(x) = E_x[int_0^inf exp(int_0^t (g - a)) dt], the solution of (Q + diag(g - a)) v = -1."""
    g = np.asarray(g, dtype=float)
    r = spectral_bound(spec.generator, g)
    if not (r < a < 0):
        raise PreconditionError(f"need r(g) < a < 0, got r(g)={r:.12g}, a={a:.12g}")
    A = spec.generator + np.diag(g - a)
    try:
        v = np.linalg.solve(A, -np.ones(spec.n))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - excluded by the precondition
        raise AssertionError("singular resolvent system despite r(g) < a") from exc
    assert np.all(v > 0), "resolvent lost positivity"
    return v


def tail_supremum_bound(spec, g, a, T):
    """Bound (e^{aT}/d) ||v|| on sup_x sup_{tau >= T} E_x[exp(int_0^tau g)], d = min v."""
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    v = resolvent_one(spec, g, a)
    return math.exp(a * T) / float(v.min()) * float(v.max())
