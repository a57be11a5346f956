"""Random valid models for fuzzing and the acceptance corpus.

Shift costs are c(x, xi) = -(kappa + |p_x - p_xi|) for random positions p,
which satisfies the triangle inequality for any kappa > 0.  Generators have
a positive cycle through all states, so every proper subset can be left.
"""
from __future__ import annotations

import numpy as np

from .model import ModelSpec


def random_model(rng, n_max=5, u_max=2, levels=(0, 1, 2), raw_cost=False):
    """Draw one valid ModelSpec from ``rng`` (a numpy Generator)."""
    n = int(rng.integers(1, n_max + 1))
    nu = int(rng.integers(1, min(u_max, n) + 1))

    Q = rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < 0.6)
    perm = rng.permutation(n)
    for i in range(n):  # a cycle keeps the chain irreducible
        a, b = perm[i], perm[(i + 1) % n]
        if a != b:
            Q[a, b] = max(Q[a, b], rng.uniform(0.2, 1.5))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))

    # spread-out running costs make moving to good states worth paying for
    f = -rng.uniform(0.0, 3.0, n) ** 2 / 3.0
    if raw_cost:
        f = rng.uniform(-2.0, 2.0, n)
    if rng.random() < 0.7:  # usually target the cheapest states
        U = np.sort(np.argsort(-f, kind="stable")[:nu])
    else:
        U = np.sort(rng.choice(n, size=nu, replace=False))
    kappa = rng.uniform(0.01, 0.4)
    p = rng.uniform(0.0, 1.0, n)
    c = -(kappa + np.abs(p[:, None] - p[U][None, :]))

    # nested chain: start from U plus a few states, grow to everything
    rest = [x for x in rng.permutation(n) if x not in set(U.tolist())]
    chain = []
    cur = set(U.tolist())
    extra = int(rng.integers(0, len(rest) + 1))
    cur |= set(int(x) for x in rest[:extra])
    rest = rest[extra:]
    while True:
        chain.append(sorted(cur))
        if not rest:
            break
        step = int(rng.integers(1, len(rest) + 1))
        cur |= set(int(x) for x in rest[:step])
        rest = rest[step:]
    return ModelSpec(
        states=[f"s{i}" for i in range(n)],
        generator=Q,
        running_cost=f,
        impulse_set=U.tolist(),
        shift_cost=c,
        exhaustion_chain=chain,
        grid_levels=list(levels),
    )


def random_corpus(seed, count, **kw):
    rng = np.random.default_rng(seed)
    return [random_model(rng, **kw) for _ in range(count)]
