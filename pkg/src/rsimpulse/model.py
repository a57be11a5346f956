"""Problem instances: a finite-state CTMC with running and shift costs.

A model file is YAML (JSON is accepted too, being a YAML subset)::

    states: [s0, s1]
    generator: [[-1, 1], [1, -1]]
    running_cost: [0, -2]
    impulse_set: [s0]
    shift_cost: [[-0.1], [-0.1]]
    exhaustion_chain: [[s0, s1]]
    grid_levels: [0, 1, 2]

``shift_cost`` has one row per state and one column per impulse target, in
``impulse_set`` order.  Unknown keys are rejected.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DimensionMismatchError, ModelParseError

ABS_TOL = 1e-12

REQUIRED_KEYS = (
    "states",
    "generator",
    "running_cost",
    "impulse_set",
    "shift_cost",
    "exhaustion_chain",
    "grid_levels",
)

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable problem instance.

    ``impulse_set`` and the sets of ``exhaustion_chain`` hold state indices.
    ``shift_cost[x, j]`` is the cost of shifting from state ``x`` to
    ``impulse_set[j]``.
    """

    states: tuple
    generator: np.ndarray
    running_cost: np.ndarray
    impulse_set: tuple
    shift_cost: np.ndarray
    exhaustion_chain: tuple
    grid_levels: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "generator", _frozen(self.generator))
        object.__setattr__(self, "running_cost", _frozen(self.running_cost))
        object.__setattr__(self, "impulse_set", tuple(int(i) for i in self.impulse_set))
        object.__setattr__(self, "shift_cost", _frozen(self.shift_cost))
        object.__setattr__(
            self, "exhaustion_chain", tuple(tuple(sorted(int(i) for i in b)) for b in self.exhaustion_chain)
        )
        object.__setattr__(self, "grid_levels", tuple(int(k) for k in self.grid_levels))

    @property
    def n(self):
        return len(self.states)

    @property
    def top_level(self):
        """Largest exhaustion index (the chain's last set is the full state set)."""
        return len(self.exhaustion_chain) - 1

    @property
    def U(self):
        return np.array(self.impulse_set, dtype=np.int64)

    def inside(self, m):
        """Boolean membership array of the exhaustion set with index ``m``."""
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.exhaustion_chain[m])] = True
        return mask

    @property
    def c_max(self):
        """The constant c_0: largest shift cost (strictly negative for valid models)."""
        return float(self.shift_cost.max())

    @property
    def c_norm(self):
        return float(np.abs(self.shift_cost).max())

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in REQUIRED_KEYS}
        kw.update(changes)
        return ModelSpec(**kw)

    def to_document(self):
        """Plain-python mapping in the model-file schema (labels, not indices)."""
        lab = self.states
        return {
            "states": list(lab),
            "generator": self.generator.tolist(),
            "running_cost": self.running_cost.tolist(),
            "impulse_set": [lab[i] for i in self.impulse_set],
            "shift_cost": self.shift_cost.tolist(),
            "exhaustion_chain": [[lab[i] for i in b] for b in self.exhaustion_chain],
            "grid_levels": list(self.grid_levels),
        }

    def dumps(self):
        return yaml.safe_dump(self.to_document(), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _key_lines(text):
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def _number(value, key, line):
    if isinstance(value, bool):
        raise ModelParseError(f"expected a number, got {value!r}", key, line)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str) and _NUMBER.match(value.strip()):
        return float(value)
    raise ModelParseError(f"expected a number, got {value!r}", key, line)


def _vector(value, key, line):
    if not isinstance(value, list):
        raise ModelParseError("expected a list of numbers", key, line)
    return [_number(v, key, line) for v in value]


def _matrix(value, key, line):
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ModelParseError("expected a list of lists of numbers", key, line)
    return [_vector(r, key, line) for r in value]


def _labels(value, index, key, line):
    if not isinstance(value, list):
        raise ModelParseError("expected a list of state labels", key, line)
    out = []
    for v in value:
        lab = str(v)
        if lab not in index:
            raise ModelParseError(f"unknown state label {lab!r}", key, line)
        out.append(index[lab])
    return out


def loads_model(text):
    """Parse a model document from a string.  Semantics are not validated."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ModelParseError(f"malformed document: {exc}", line=None if mark is None else mark.line + 1) from exc
    if not isinstance(doc, dict):
        raise ModelParseError("top level must be a mapping")
    lines = _key_lines(text)

    unknown = sorted(set(map(str, doc)) - set(REQUIRED_KEYS))
    if unknown:
        raise ModelParseError(f"unknown key(s): {', '.join(unknown)}", unknown[0], lines.get(unknown[0]))
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise ModelParseError(f"missing key(s): {', '.join(missing)}", missing[0])

    ln = lines.get
    states = doc["states"]
    if not isinstance(states, list) or not states:
        raise ModelParseError("expected a nonempty list of state labels", "states", ln("states"))
    states = [str(s) for s in states]
    if len(set(states)) != len(states):
        raise ModelParseError("duplicate state labels", "states", ln("states"))
    index = {s: i for i, s in enumerate(states)}
    n = len(states)

    Q = _matrix(doc["generator"], "generator", ln("generator"))
    if len(Q) != n or any(len(r) != n for r in Q):
        shape = f"{len(Q)}x{max((len(r) for r in Q), default=0)}"
        raise DimensionMismatchError(f"generator is {shape}, expected {n}x{n}", "generator", ln("generator"))

    f = _vector(doc["running_cost"], "running_cost", ln("running_cost"))
    if len(f) != n:
        raise DimensionMismatchError(f"running_cost has {len(f)} entries, expected {n}", "running_cost",
                                     ln("running_cost"))

    U = _labels(doc["impulse_set"], index, "impulse_set", ln("impulse_set"))

    c = _matrix(doc["shift_cost"], "shift_cost", ln("shift_cost"))
    if len(c) != n or any(len(r) != len(U) for r in c):
        raise DimensionMismatchError(f"shift_cost must be {n}x{len(U)}", "shift_cost", ln("shift_cost"))

    chain_doc = doc["exhaustion_chain"]
    if not isinstance(chain_doc, list) or not chain_doc:
        raise ModelParseError("expected a nonempty list of label lists", "exhaustion_chain", ln("exhaustion_chain"))
    chain = [_labels(b, index, "exhaustion_chain", ln("exhaustion_chain")) for b in chain_doc]

    levels = doc["grid_levels"]
    if not isinstance(levels, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in levels):
        raise ModelParseError("expected a list of integers", "grid_levels", ln("grid_levels"))

    return ModelSpec(
        states=states,
        generator=np.array(Q, dtype=float).reshape(n, n),
        running_cost=f,
        impulse_set=U,
        shift_cost=np.array(c, dtype=float).reshape(n, len(U)),
        exhaustion_chain=chain,
        grid_levels=levels,
    )


def load_model(path):
    """Read and parse a model file."""
    return loads_model(Path(os.fspath(path)).read_text())


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    invariant: str
    indices: tuple
    message: str

    def __str__(self):
        return self.message


def _reachable(adj, sources):
    seen = set(sources)
    stack = list(sources)
    while stack:
        x = stack.pop()
        for y in np.nonzero(adj[x])[0]:
            y = int(y)
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def validate_model(spec):
    """Check every model invariant; return the (possibly empty) list of violations."""
    out = []
    n = spec.n
    Q = spec.generator
    f = spec.running_cost
    c = spec.shift_cost
    U = spec.impulse_set

    def bad(invariant, indices, message):
        out.append(Violation(invariant, tuple(indices), message))

    if n < 1:
        bad("states", (), "at least one state is required")
        return out
    if Q.shape != (n, n) or f.shape != (n,) or c.shape != (n, len(U)):
        bad("dimensions", (), "array dimensions do not match the state count")
        return out

    if not np.all(np.isfinite(Q)):
        bad("generator_finite", (), "generator has non-finite entries")
    off = Q - np.diag(np.diag(Q))
    for x, y in zip(*np.nonzero(off < 0)):
        bad("generator_offdiag", (x, y), f"generator off-diagonal must be nonnegative at ({x},{y})")
    rows = Q.sum(axis=1)
    for x in np.nonzero(np.abs(rows) > ABS_TOL)[0]:
        bad("generator_rowsum", (x,), f"generator row {x} sums to {rows[x]:.3g}, not 0")

    if not np.all(np.isfinite(f)):
        bad("running_cost_finite", (), "running_cost has non-finite entries")
    for x in np.nonzero(f > 0)[0]:
        bad("running_cost_sign", (x,), f"running_cost must be non-positive at {x} (normalize first)")

    if not U:
        bad("impulse_set_empty", (), "impulse_set must be nonempty")
    if any(b <= a for a, b in zip(U, U[1:])):
        bad("impulse_set_order", (), "impulse_set must be strictly increasing")
    if any(not 0 <= i < n for i in U):
        bad("impulse_set_range", (), "impulse_set index out of range")
        return out

    if not np.all(np.isfinite(c)):
        bad("shift_cost_finite", (), "shift_cost has non-finite entries")
    for x, j in zip(*np.nonzero(~(c < 0))):
        bad("shift_cost_sign", (x, j), f"shift_cost must be strictly negative at ({x},{j})")
    # c(x, xi) >= c(x, eta) + c(eta, xi) for eta, xi in U
    for a, eta in enumerate(U):
        chained = c[:, [a]] + c[eta][None, :]
        for x, j in zip(*np.nonzero(c < chained - ABS_TOL)):
            bad("triangle_inequality", (x, eta, U[j]),
                f"triangle inequality fails: c({x},{U[j]}) < c({x},{eta}) + c({eta},{U[j]})")

    chain = spec.exhaustion_chain
    if not chain:
        bad("exhaustion_chain_empty", (), "exhaustion_chain must be nonempty")
    else:
        for m, b in enumerate(chain):
            if any(not 0 <= i < n for i in b):
                bad("exhaustion_chain_range", (m,), f"exhaustion set B_{m} has out-of-range indices")
                return out
        for m in range(1, len(chain)):
            if not (set(chain[m - 1]) < set(chain[m])):
                bad("exhaustion_chain_nested", (m - 1, m), f"B_{m - 1} is not a strict subset of B_{m}")
        if not set(U) <= set(chain[0]):
            bad("impulse_set_in_B0", (), "impulse_set must be contained in B_0")
        if set(chain[-1]) != set(range(n)):
            bad("exhaustion_chain_full", (len(chain) - 1,), "last exhaustion set must be the full state set")

        adj = off > 0
        for m, b in enumerate(chain[:-1]):
            members = set(b)
            leak = {x for x in members if any(adj[x, y] for y in range(n) if y not in members)}
            # x escapes iff some leaking state is reachable from x inside B_m
            sub = adj.copy()
            outside = [y for y in range(n) if y not in members]
            sub[:, outside] = False
            stuck = [x for x in sorted(members) if not (_reachable(sub, [x]) & leak)]
            if stuck:
                bad("escape", (m, *stuck), f"escape from B_{m} impossible from states {stuck}")

        if n > 1:
            fwd = _reachable(adj, [0])
            back = _reachable(adj.T, [0])
            if len(fwd) < n or len(back) < n:
                bad("irreducible", (), "generator is not irreducible (some state is never visited)")

    levels = spec.grid_levels
    if not levels:
        bad("grid_levels_empty", (), "grid_levels must be nonempty")
    if any(k < 0 for k in levels):
        bad("grid_levels_sign", (), "grid_levels must be nonnegative")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        bad("grid_levels_order", (), "grid_levels must be strictly increasing")
    return out


def normalize_running_cost(raw_f):
    """Shift a running cost down by its sup-norm so that it is non-positive.

    Returns ``(f, offset)`` with ``f = raw_f - offset`` and ``offset = max|raw_f|``.
    Long-run values of the shifted problem are lower by exactly ``offset``.
    """
    raw = np.asarray(raw_f, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("running cost has non-finite entries")
    offset = float(np.max(np.abs(raw))) if raw.size else 0.0
    return raw - offset, offset
