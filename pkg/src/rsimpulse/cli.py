"""Command-line entry point: ``rsimpulse {solve,oracle,simulate,report}``.

Exit codes: 0 success, 1 error, 2 degenerate problem, 3 oracle mismatch.
Every run directory holds plain CSV files and one ``manifest.json``; CSV
floats are written with ``repr`` so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__, _accel
from .bellman import DEGENERACY_MARGIN, bellman_residual, lambda_full
from .eigensolver import SolverOptions, solve_one_step
from .errors import DegenerateError, EnumerationCapError, ModelParseError, RSImpulseError
from .model import load_model, normalize_running_cost, validate_model
from .operators import apply_M
from .policy import CONTINUE, DEFAULT_CAP, Policy, never_impulse, oracle_lambda, strategy_from_solution
from .propagator import weighted_kernel
from .simulator import SimConfig, estimate_J

EXIT_OK, EXIT_ERROR, EXIT_DEGENERATE, EXIT_MISMATCH = 0, 1, 2, 3
MANIFEST_SCHEMA = 1


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """Rows may be dicts keyed by the header or plain sequences."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else r
            wr.writerow([_fmt(v) for v in vals])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _update_manifest(out, command, model_path, options, outputs):
    path = os.path.join(out, "manifest.json")
    man = {}
    if os.path.exists(path):
        with open(path) as fh:
            man = json.load(fh)
    man.update({"schema_version": MANIFEST_SCHEMA, "artifact_version": __version__})
    if model_path is not None:
        man["model"] = {"path": os.path.abspath(model_path), "sha256": _hash(model_path)}
    runs = man.setdefault("runs", {})
    runs[command] = {
        "options": options,
        "backend": _accel.backend(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _load_valid(path):
    """Load and validate; raw running costs with positive entries are normalised."""
    spec = load_model(path)
    offset = 0.0
    if np.any(spec.running_cost > 0):
        f, offset = normalize_running_cost(spec.running_cost)
        spec = spec.replace(running_cost=f)
    bad = validate_model(spec)
    if bad:
        raise ModelParseError("model failed validation:\n  " + "\n  ".join(str(v) for v in bad))
    return spec, offset


def _opts(args):
    return SolverOptions(tol=args.tol, max_iters=args.max_iters)


def _state_index(spec, token):
    if token in spec.states:
        return spec.states.index(token)
    try:
        i = int(token)
    except ValueError:
        raise ModelParseError(f"unknown state '{token}'") from None
    if not 0 <= i < spec.n:
        raise ModelParseError(f"state index {i} out of range")
    return i


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(args):
    spec, offset = _load_valid(args.model)
    os.makedirs(args.out, exist_ok=True)
    sol = lambda_full(spec, _opts(args), margin=args.degeneracy_margin)
    lab = spec.states
    outputs = []

    outputs.append(write_csv(os.path.join(args.out, "ladder.csv"),
                             ["m", "k", "lambda", "residual", "iterations"], sol.ladder))
    outputs.append(write_csv(
        os.path.join(args.out, "convergence.csv"),
        ["k", "k_next", "lambda", "lambda_next", "lambda_gap", "Mw_gap", "w_gap"], sol.convergence))
    Mw, arg = apply_M(spec, sol.w)
    outputs.append(write_csv(
        os.path.join(args.out, "profile.csv"), ["state", "w", "Mw", "gap"],
        [[lab[x], sol.w[x], Mw[x], sol.w[x] - Mw[x]] for x in range(spec.n)]))

    residual = math.nan
    if not sol.degenerate:
        residual = bellman_residual(spec, sol)
        pol = strategy_from_solution(spec, sol)
        outputs.append(write_csv(
            os.path.join(args.out, "strategy.csv"), ["state", "action", "target"],
            [[lab[x], "continue" if a == CONTINUE else "jump", "" if a == CONTINUE else lab[a]]
             for x, a in enumerate(pol.action)]))
    else:
        stale = os.path.join(args.out, "strategy.csv")
        if os.path.exists(stale):
            os.remove(stale)

    summary = [
        ("lambda", sol.lambda_), ("lambda_raw", sol.lambda_ + offset), ("offset", offset),
        ("r_f", sol.r_f), ("r_f_raw", sol.r_f + offset), ("degenerate", sol.degenerate),
        ("margin", sol.margin), ("k", sol.k), ("bellman_residual", residual),
    ]
    outputs.append(write_csv(os.path.join(args.out, "summary.csv"), ["key", "value"], summary))
    if args.dump_kernels:
        for k in spec.grid_levels:
            K = weighted_kernel(spec, 2.0 ** -k).matrix
            outputs.append(write_csv(os.path.join(args.out, f"kernel_k{k}.csv"), ["row"] + list(lab),
                                     [[lab[i]] + list(K[i]) for i in range(spec.n)]))
    _update_manifest(args.out, "solve", args.model,
                     {"tol": args.tol, "max_iters": args.max_iters,
                      "degeneracy_margin": args.degeneracy_margin,
                      "grid_levels": list(spec.grid_levels)}, outputs)

    print(f"lambda = {_fmt(sol.lambda_)}")
    if offset:
        print(f"lambda_raw = {_fmt(sol.lambda_ + offset)}")
    print(f"r_f = {_fmt(sol.r_f)}")
    print(f"degenerate = {_fmt(sol.degenerate)}")
    if sol.degenerate:
        print("problem is degenerate (lambda within margin of r(f)); no strategy written", file=sys.stderr)
        return EXIT_DEGENERATE
    print(f"bellman_residual = {_fmt(residual)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def cmd_oracle(args):
    spec, _ = _load_valid(args.model)
    os.makedirs(args.out, exist_ok=True)
    level = args.level
    if level is not None and not 0 <= level <= spec.top_level:
        return _err(f"--level must be in 0..{spec.top_level}")
    ks = args.grid_k if args.grid_k else list(spec.grid_levels)
    m = spec.top_level if level is None else level

    saved = {}
    ladder_path = os.path.join(args.out, "ladder.csv")
    if os.path.exists(ladder_path):
        for r in read_csv(ladder_path):
            saved[(int(r["m"]), int(r["k"]))] = float(r["lambda"])

    rows, cmp_rows = [], []
    worst = 0.0
    for k in ks:
        res = oracle_lambda(spec, k, level=level, cap=args.cap)
        for p, v, per in res.table:
            rows.append([k, m, p.encode(spec.states), v,
                         "" if per is None else ";".join(repr(float(x)) for x in per)])
        eig = solve_one_step(spec, m, k, _opts(args)).lambda_m_delta
        ref = saved.get((m, k), eig)
        gap = abs(res.best_value - ref)
        worst = max(worst, gap, abs(res.best_value - eig))
        cmp_rows.append([k, m, res.best_value, eig, saved.get((m, k), math.nan), gap,
                         res.best_policy.encode(spec.states)])
        print(f"k={k} m={m} oracle = {_fmt(res.best_value)} eigen = {_fmt(eig)} |diff| = {_fmt(gap)}")

    outputs = [
        write_csv(os.path.join(args.out, "oracle_table.csv"),
                  ["k", "m", "policy", "value", "per_state"], rows),
        write_csv(os.path.join(args.out, "oracle_compare.csv"),
                  ["k", "m", "oracle", "eigen", "saved", "abs_diff", "best_policy"], cmp_rows),
    ]
    _update_manifest(args.out, "oracle", args.model,
                     {"level": level, "grid_k": ks, "cap": args.cap, "oracle_tol": args.oracle_tol}, outputs)
    if worst > args.oracle_tol:
        print(f"oracle mismatch {worst:.3e} > {args.oracle_tol:g}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _read_strategy(spec, out):
    path = os.path.join(out, "strategy.csv")
    if not os.path.exists(path):
        raise FileNotFoundError("no strategy.csv in the run directory: run solve first")
    act = np.full(spec.n, CONTINUE)
    for r in read_csv(path):
        x = spec.states.index(r["state"])
        if r["action"] == "jump":
            act[x] = spec.states.index(r["target"])
    return Policy(act)


def _summary_value(out, key):
    path = os.path.join(out, "summary.csv")
    if os.path.exists(path):
        for r in read_csv(path):
            if r["key"] == key:
                return r["value"]
    return None


def cmd_simulate(args):
    spec, offset = _load_valid(args.model)
    os.makedirs(args.out, exist_ok=True)
    if args.policy == "optimal":
        try:
            pol = _read_strategy(spec, args.out)
        except FileNotFoundError as exc:
            return _err(str(exc))
    else:
        pol = never_impulse(spec)
    k = args.grid_k
    if k is None:
        saved = _summary_value(args.out, "k")
        k = int(saved) if saved is not None else spec.grid_levels[-1]
    cfg = SimConfig(
        horizon=args.horizon, trajectories=args.trajectories, seed=args.seed,
        start=_state_index(spec, args.start), k=k, decide_at_zero=args.decide_at_zero,
        jump_time_mode=args.jump_time_mode, bootstrap=args.bootstrap,
    )
    est = estimate_J(spec, pol, cfg, keep_exponents=args.dump_exponents)
    report = {
        "policy": args.policy,
        "policy_encoding": pol.encode(spec.states),
        "horizon": cfg.horizon, "trajectories": cfg.trajectories, "seed": cfg.seed,
        "start": spec.states[cfg.start], "grid_k": cfg.k,
        "decide_at_zero": cfg.decide_at_zero, "jump_time_mode": cfg.jump_time_mode,
        "point": est.point, "point_raw": est.point + offset, "stderr": est.stderr,
        "impulse_rate": est.impulse_count_stats, "max_burst": est.max_burst,
    }
    outputs = []
    path = os.path.join(args.out, "simulation.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(path)
    outputs.append(write_csv(os.path.join(args.out, "j_ladder.csv"), ["T", "point", "stderr"], est.ladder))
    if args.dump_exponents:
        outputs.append(write_csv(os.path.join(args.out, "exponents.csv"), ["trajectory", "exponent"],
                                 [[i, z] for i, z in enumerate(est.exponents)]))
    _update_manifest(args.out, "simulate", args.model,
                     {k_: v for k_, v in report.items() if k_ not in ("point", "point_raw", "stderr",
                                                                     "impulse_rate", "max_burst")},
                     outputs)
    print(f"J = {_fmt(est.point)} +/- {_fmt(est.stderr)}")
    print(f"impulse rate mean = {_fmt(est.impulse_count_stats['mean'])}, max burst = {est.max_burst}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args):
    ladder_path = os.path.join(args.run_dir, "ladder.csv")
    if not os.path.exists(ladder_path):
        return _err(f"{args.run_dir} has no ladder.csv; run solve first")
    ladder = read_csv(ladder_path)
    top = max(int(r["m"]) for r in ladder)
    outputs = [
        write_csv(os.path.join(args.run_dir, "plot_lambda_vs_m.csv"), ["k", "m", "lambda"],
                  [[int(r["k"]), int(r["m"]), float(r["lambda"])] for r in ladder]),
        write_csv(os.path.join(args.run_dir, "plot_lambda_vs_k.csv"), ["k", "delta", "lambda"],
                  [[int(r["k"]), 2.0 ** -int(r["k"]), float(r["lambda"])]
                   for r in ladder if int(r["m"]) == top]),
    ]
    jl = os.path.join(args.run_dir, "j_ladder.csv")
    jrows = [[float(r["T"]), float(r["point"]), float(r["stderr"])] for r in read_csv(jl)] \
        if os.path.exists(jl) else []
    outputs.append(write_csv(os.path.join(args.run_dir, "plot_j_vs_T.csv"), ["T", "point", "stderr"], jrows))
    prof = read_csv(os.path.join(args.run_dir, "profile.csv"))
    outputs.append(write_csv(os.path.join(args.run_dir, "plot_profiles.csv"), ["state", "w", "Mw"],
                             [[r["state"], float(r["w"]), float(r["Mw"])] for r in prof]))
    for p in outputs:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--tol", type=float, default=1e-12, help="Collatz-Wielandt tolerance")
    shared.add_argument("--max-iters", type=int, default=100_000)
    shared.add_argument("--degeneracy-margin", type=float, default=DEGENERACY_MARGIN)
    shared.add_argument("--out", default="run", help="run directory")

    p = argparse.ArgumentParser(prog="rsimpulse", description="Risk-sensitive impulse control solver")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[shared], help="solve the Bellman equation")
    s.add_argument("model")
    s.add_argument("--dump-kernels", action="store_true")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", parents=[shared], help="exhaustive policy oracle")
    o.add_argument("model")
    o.add_argument("--level", type=int, default=None)
    o.add_argument("--grid-k", type=int, nargs="*", default=None)
    o.add_argument("--cap", type=int, default=DEFAULT_CAP)
    o.add_argument("--oracle-tol", type=float, default=1e-8)
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("simulate", parents=[shared], help="Monte Carlo estimate of J")
    m.add_argument("model")
    m.add_argument("--policy", choices=["optimal", "never"], default="optimal")
    m.add_argument("--horizon", type=float, default=200.0)
    m.add_argument("--trajectories", type=int, default=200_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--start", default="0", help="state label or index")
    m.add_argument("--grid-k", type=int, default=None)
    m.add_argument("--decide-at-zero", action=argparse.BooleanOptionalAction, default=True)
    m.add_argument("--jump-time-mode", action="store_true")
    m.add_argument("--bootstrap", type=int, default=1000)
    m.add_argument("--dump-exponents", action="store_true")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="emit plot-ready CSVs for a run directory")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelParseError as exc:
        return _err(str(exc))
    except EnumerationCapError as exc:
        return _err(str(exc))
    except DegenerateError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (RSImpulseError, OSError, ValueError) as exc:
        return _err(str(exc))


if __name__ == "__main__":
    sys.exit(main())
