"""Intervention and one-step operators on state-indexed arrays.

Additive scale: ``M h(x) = max_xi c(x, xi) + h(xi)``.
Multiplicative scale: ``M~ h(x) = max_xi e^{c(x, xi)} h(xi)`` together with the
one-step operators P~ and T~ built on a weighted kernel and a domain mask.

Arrays living on a domain B_m are stored over the full state set; entries off
the domain are ignored on input (only values on the impulse set are read).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, PreconditionError


@dataclass(frozen=True, eq=False)
class DomainMask:
    m: int
    inside: np.ndarray


def domain_mask(spec, m):
    if not 0 <= m <= spec.top_level:
        raise PreconditionError(f"exhaustion index {m} outside 0..{spec.top_level}")
    inside = spec.inside(m)
    inside.setflags(write=False)
    return DomainMask(int(m), inside)


def _exp_cost(spec):
    e = spec._cache.get("exp_cost")
    if e is None:
        e = np.exp(spec.shift_cost)
        e.setflags(write=False)
        spec._cache["exp_cost"] = e
    return e


def apply_M(spec, h):
    """Return ``(Mh, argmax)``; argmax holds state indices of the best impulse target.

    Ties go to the lowest impulse index (``np.argmax`` keeps the first maximum).
    """
    h = np.asarray(h, dtype=float)
    cand = spec.shift_cost + h[spec.U][None, :]
    j = np.argmax(cand, axis=1)
    values = cand[np.arange(spec.n), j]
    return values, spec.U[j]


def apply_tilde_M(spec, h):
    h = np.asarray(h, dtype=float)
    hu = h[spec.U]
    if not np.all(hu > 0):
        raise PreconditionError("apply_tilde_M needs positive values on the impulse set")
    return np.max(_exp_cost(spec) * hu[None, :], axis=1)


def _check(spec, kernel, mask, h):
    n = spec.n
    if kernel.matrix.shape != (n, n) or mask.inside.shape != (n,) or np.shape(h) != (n,):
        raise DimensionMismatchError(
            f"shapes: kernel {kernel.matrix.shape}, mask {mask.inside.shape}, h {np.shape(h)}; n={n}"
        )
    h = np.asarray(h, dtype=float)
    if not np.all(h[mask.inside] > 0):
        raise PreconditionError("h must be positive on the domain")
    return h


def apply_tilde_P(spec, kernel, mask, h):
    """P~h(x) = sum_y K(x, y) [h(y) if y in B_m else M~h(y)], for x in B_m.

    Entries off B_m in the result are the same formula evaluated there; callers
    ignore them.
    """
    h = _check(spec, kernel, mask, h)
    H = np.where(mask.inside, h, apply_tilde_M(spec, h))
    return kernel.matrix @ H


def apply_tilde_T(spec, kernel, mask, h):
    """T~h = max(P~h, M~P~h) on B_m; off B_m the value is M~ of the result."""
    h = _check(spec, kernel, mask, h)
    return _kernels.tilde_T(kernel.matrix, mask.inside, spec.U, _exp_cost(spec), h)
