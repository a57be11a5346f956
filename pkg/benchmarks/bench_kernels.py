"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--trajectories 50000]

Each kernel is warmed up once (numba compiles on first call) and then timed
``--repeat`` times; the best time is reported together with the largest
difference between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from rsimpulse import _accel, _kernels
from rsimpulse.policy import Policy
from rsimpulse.propagator import weighted_kernel
from rsimpulse.random_models import random_model
from rsimpulse.simulator import SimConfig, simulate_exponents


def _best(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(trajectories):
    spec = random_model(np.random.default_rng(5), n_max=5)
    while spec.n < 4:
        spec = random_model(np.random.default_rng(spec.n + 17), n_max=5)
    K = weighted_kernel(spec, 0.25, -0.3).matrix
    inside = np.ones(spec.n, dtype=bool)
    U = np.asarray(spec.impulse_set, dtype=np.int64)
    expc = np.exp(spec.shift_cost)
    h0 = np.ones(spec.n)
    eG = np.exp(-np.linspace(0.1, 1.0, spec.n))
    Ks = weighted_kernel(spec, 0.25, -0.5).matrix

    pol = Policy([spec.impulse_set[0] if x not in spec.impulse_set else -1 for x in range(spec.n)])
    cfg = SimConfig(horizon=50.0, trajectories=trajectories, seed=3, k=2)
    return {
        "power_iterate": lambda: _kernels.power_iterate(K, inside, U, expc, h0, 1e-15, 20000, 1000)[0],
        "stopping_sweeps": lambda: _kernels.stopping_sweeps(Ks, inside, eG, eG, 20000, 0.0)[0],
        "simulate": lambda: simulate_exponents(spec, pol, cfg)[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--trajectories", type=int, default=50_000)
    args = ap.parse_args(argv)

    if not _accel.HAS_NUMBA:
        print("numba is not available (or RSIMPULSE_NO_NUMBA is set); timing numpy only")
    print(f"{'kernel':<16} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max |diff|':>11}")
    old = _accel.USE_NUMBA
    try:
        for name, fn in cases(args.trajectories).items():
            _accel.USE_NUMBA = False
            t_np, out_np = _best(fn, args.repeat)
            if _accel.HAS_NUMBA:
                _accel.USE_NUMBA = True
                t_nb, out_nb = _best(fn, args.repeat)
                diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
                print(f"{name:<16} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x {diff:>11.2e}")
            else:
                print(f"{name:<16} {t_np:>10.4f} {'-':>10} {'-':>8} {'-':>11}")
    finally:
        _accel.USE_NUMBA = old


if __name__ == "__main__":
    main()
