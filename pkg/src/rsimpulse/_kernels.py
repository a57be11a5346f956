"""Hot inner loops, each in two flavours.

``*_nb`` functions are plain loops compiled with numba (see ``_accel``); the
``*_np`` twins are vectorised numpy and serve as the fallback when numba is
unavailable or disabled.  The public dispatchers at the bottom pick one at
call time from ``_accel.USE_NUMBA``.

Both flavours run the same algorithm with the same random stream, so their
outputs agree to rounding (logarithms may differ in the last ulp).
"""
import numpy as np

from . import _accel
from ._accel import njit

# status codes returned by the power iteration
CONVERGED = 0
MAX_ITERS = 1
STALLED = 2
UNDERFLOW = 3

# ---------------------------------------------------------------------------
# counter-based random stream (splitmix64)
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def _stream_start(seed, index):
    return _mix64(_mix64(seed) + index * _GOLDEN)


def stream_start_np(seed, indices):
    """Initial stream states for an array of trajectory indices (numpy path)."""
    seed = np.asarray(seed, dtype=np.uint64)
    idx = np.asarray(indices, dtype=np.uint64)
    return _mix64_np(_mix64_np(np.full(idx.shape, seed, dtype=np.uint64)) + idx * _GOLDEN)


def _mix64_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _draw_np(state, idx):
    """Advance the streams ``state[idx]`` in place, return uniforms in (0, 1)."""
    state[idx] += _GOLDEN
    return ((_mix64_np(state[idx]) >> _S11).astype(np.float64) + 0.5) * _INV53


# ---------------------------------------------------------------------------
# nonlinear power iteration for h -> max(P h, M P h)
# ---------------------------------------------------------------------------


@njit
def _tilde_T_nb(K, inside, U, expc, h, out):
    n = K.shape[0]
    nu = U.shape[0]
    H = np.empty(n)
    for x in range(n):
        if inside[x]:
            H[x] = h[x]
        else:
            best = 0.0
            for j in range(nu):
                v = expc[x, j] * h[U[j]]
                if v > best:
                    best = v
            H[x] = best
    P = np.empty(n)
    for x in range(n):
        s = 0.0
        for y in range(n):
            s += K[x, y] * H[y]
        P[x] = s
    for x in range(n):
        if inside[x]:
            best = P[x]
            for j in range(nu):
                v = expc[x, j] * P[U[j]]
                if v > best:
                    best = v
            out[x] = best
    for x in range(n):
        if not inside[x]:
            best = 0.0
            for j in range(nu):
                v = expc[x, j] * out[U[j]]
                if v > best:
                    best = v
            out[x] = best


def _tilde_M_np(expc, U, h):
    return np.max(expc * h[U][None, :], axis=1)


def _tilde_T_np(K, inside, U, expc, h):
    H = np.where(inside, h, _tilde_M_np(expc, U, h))
    P = K @ H
    out = np.maximum(P, _tilde_M_np(expc, U, P))
    return np.where(inside, out, _tilde_M_np(expc, U, out))


@njit
def _power_iterate_nb(K, inside, U, expc, h0, tol, max_iters, stall_window):
    n = K.shape[0]
    nu = U.shape[0]
    h = h0.copy()
    g = np.empty(n)
    best_spread = np.inf
    since_best = 0
    lo = 0.0
    hi = 0.0
    for it in range(1, max_iters + 1):
        _tilde_T_nb(K, inside, U, expc, h, g)
        lo = np.inf
        hi = -np.inf
        for x in range(n):
            if inside[x]:
                if not (h[x] > 0.0) or not (g[x] > 0.0):
                    return h, lo, hi, it, UNDERFLOW
                r = g[x] / h[x]
                if r < lo:
                    lo = r
                if r > hi:
                    hi = r
        scale = 0.0
        for j in range(nu):
            if g[U[j]] > scale:
                scale = g[U[j]]
        for x in range(n):
            h[x] = g[x] / scale
        spread = hi - lo
        if spread < tol * np.sqrt(lo * hi):
            return h, lo, hi, it, CONVERGED
        if spread < best_spread:
            best_spread = spread
            since_best = 0
        else:
            since_best += 1
            if since_best >= stall_window:
                return h, lo, hi, it, STALLED
    return h, lo, hi, max_iters, MAX_ITERS


def _power_iterate_np(K, inside, U, expc, h0, tol, max_iters, stall_window):
    h = h0.copy()
    best_spread = np.inf
    since_best = 0
    lo = hi = 0.0
    for it in range(1, max_iters + 1):
        g = _tilde_T_np(K, inside, U, expc, h)
        hin, gin = h[inside], g[inside]
        if not (np.all(hin > 0.0) and np.all(gin > 0.0)):
            return h, np.inf, -np.inf, it, UNDERFLOW
        r = gin / hin
        lo, hi = float(r.min()), float(r.max())
        h = g / g[U].max()
        spread = hi - lo
        if spread < tol * np.sqrt(lo * hi):
            return h, lo, hi, it, CONVERGED
        if spread < best_spread:
            best_spread = spread
            since_best = 0
        else:
            since_best += 1
            if since_best >= stall_window:
                return h, lo, hi, it, STALLED
    return h, lo, hi, max_iters, MAX_ITERS


# ---------------------------------------------------------------------------
# optimal stopping sweeps in exponential scale
# ---------------------------------------------------------------------------


@njit
def _stopping_sweeps_nb(K, inside, eG, v0, max_sweeps, tol):
    n = K.shape[0]
    v = v0.copy()
    H = np.empty(n)
    new = np.empty(n)
    change = np.inf
    for s in range(1, max_sweeps + 1):
        for y in range(n):
            H[y] = v[y] if inside[y] else eG[y]
        change = 0.0
        for x in range(n):
            if inside[x]:
                acc = 0.0
                for y in range(n):
                    acc += K[x, y] * H[y]
                new[x] = acc if acc > eG[x] else eG[x]
            else:
                new[x] = eG[x]
            d = abs(new[x] - v[x])
            if d > change:
                change = d
        for x in range(n):
            v[x] = new[x]
        if tol > 0.0 and change < tol:
            return v, s, change
    return v, max_sweeps, change


def _stopping_sweeps_np(K, inside, eG, v0, max_sweeps, tol):
    v = v0.copy()
    change = np.inf
    for s in range(1, max_sweeps + 1):
        H = np.where(inside, v, eG)
        new = np.where(inside, np.maximum(K @ H, eG), eG)
        change = float(np.max(np.abs(new - v))) if v.size else 0.0
        v = new
        if tol > 0.0 and change < tol:
            return v, s, change
    return v, max_sweeps, change


# ---------------------------------------------------------------------------
# controlled CTMC trajectories
# ---------------------------------------------------------------------------


@njit
def _record_impulse_nb(ring, head, tail, t):
    R = ring.shape[0]
    ring[head % R] = t
    head += 1
    if head - tail > R:
        tail = head - R
    while tail < head and ring[tail % R] <= t - 1.0:
        tail += 1
    return head, tail, head - tail


@njit
def _simulate_nb(q, cum, f, cost, target, start, delta, horizon, decide_at_zero,
                 jump_mode, seed, first_index, n_traj, ckpt, ring_cap, trace_cap):
    n_ck = ckpt.shape[0]
    Z = np.empty((n_traj, n_ck + 1))
    counts = np.zeros(n_traj, dtype=np.int64)
    bursts = np.zeros(n_traj, dtype=np.int64)
    trace = np.full((n_traj, max(trace_cap, 1)), np.nan)
    last_j = int(np.floor(horizon / delta + 1e-9))
    ring = np.empty(ring_cap)
    n = q.shape[0]
    for i in range(n_traj):
        st = _stream_start(seed, np.uint64(first_index + i))
        x = start
        z = 0.0
        cnt = 0
        burst = 0
        head = 0
        tail = 0
        p = 0
        st += _GOLDEN
        u = (float(_mix64(st) >> _S11) + 0.5) * _INV53
        nj = -np.log(u) / q[x] if q[x] > 0.0 else np.inf
        for j in range(last_j + 1):
            tj = j * delta
            if target[x] >= 0 and ((j == 0 and decide_at_zero) or (j > 0 and not jump_mode)):
                z += cost[x]
                x = target[x]
                if cnt < trace_cap:
                    trace[i, cnt] = tj
                cnt += 1
                head, tail, c = _record_impulse_nb(ring, head, tail, tj)
                if c > burst:
                    burst = c
                st += _GOLDEN
                u = (float(_mix64(st) >> _S11) + 0.5) * _INV53
                nj = tj - np.log(u) / q[x] if q[x] > 0.0 else np.inf
            while p < n_ck and ckpt[p] == j:
                Z[i, p] = z
                p += 1
            t_end = min((j + 1) * delta, horizon)
            if t_end <= tj:
                break
            t = tj
            while nj <= t_end:
                z += f[x] * (nj - t)
                t = nj
                st += _GOLDEN
                u = (float(_mix64(st) >> _S11) + 0.5) * _INV53
                y = 0
                while y < n - 1 and not (u < cum[x, y]):
                    y += 1
                x = y
                if jump_mode and target[x] >= 0:
                    z += cost[x]
                    x = target[x]
                    if cnt < trace_cap:
                        trace[i, cnt] = t
                    cnt += 1
                    head, tail, c = _record_impulse_nb(ring, head, tail, t)
                    if c > burst:
                        burst = c
                st += _GOLDEN
                u = (float(_mix64(st) >> _S11) + 0.5) * _INV53
                nj = t - np.log(u) / q[x] if q[x] > 0.0 else np.inf
            z += f[x] * (t_end - t)
        Z[i, n_ck] = z
        counts[i] = cnt
        bursts[i] = burst
    return Z, counts, bursts, trace


def _record_impulse_np(ring, head, tail, idx, t):
    R = ring.shape[1]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), idx.shape)
    ring[idx, head[idx] % R] = t
    head[idx] += 1
    tail[idx] = np.maximum(tail[idx], head[idx] - R)
    while True:
        live = tail[idx] < head[idx]
        drop = np.zeros(idx.shape, dtype=bool)
        drop[live] = ring[idx[live], tail[idx[live]] % R] <= t[live] - 1.0
        if not drop.any():
            break
        tail[idx[drop]] += 1
    return head[idx] - tail[idx]


def _hold_np(q, x, u):
    """Exponential holding times; absorbing states (q == 0) never jump."""
    rate = q[x]
    out = np.full(x.shape, np.inf)
    live = rate > 0.0
    out[live] = -np.log(u[live]) / rate[live]
    return out


def _simulate_np(q, cum, f, cost, target, start, delta, horizon, decide_at_zero,
                 jump_mode, seed, first_index, n_traj, ckpt, ring_cap, trace_cap):
    n_ck = ckpt.shape[0]
    Z = np.empty((n_traj, n_ck + 1))
    counts = np.zeros(n_traj, dtype=np.int64)
    bursts = np.zeros(n_traj, dtype=np.int64)
    trace = np.full((n_traj, max(trace_cap, 1)), np.nan)
    ring = np.empty((n_traj, ring_cap))
    head = np.zeros(n_traj, dtype=np.int64)
    tail = np.zeros(n_traj, dtype=np.int64)
    last_j = int(np.floor(horizon / delta + 1e-9))

    st = stream_start_np(seed, np.arange(first_index, first_index + n_traj, dtype=np.uint64))
    x = np.full(n_traj, start, dtype=np.int64)
    z = np.zeros(n_traj)
    every = np.arange(n_traj)
    nj = _hold_np(q, x, _draw_np(st, every))

    def impulse(idx, t):
        nonlocal x
        z[idx] += cost[x[idx]]
        x[idx] = target[x[idx]]
        slot = counts[idx]
        ok = slot < trace_cap
        trace[idx[ok], slot[ok]] = np.broadcast_to(t, idx.shape)[ok]
        counts[idx] += 1
        c = _record_impulse_np(ring, head, tail, idx, t)
        bursts[idx] = np.maximum(bursts[idx], c)

    p = 0
    for j in range(last_j + 1):
        tj = j * delta
        if (j == 0 and decide_at_zero) or (j > 0 and not jump_mode):
            idx = np.nonzero(target[x] >= 0)[0]
            if idx.size:
                impulse(idx, tj)
                nj[idx] = tj + _hold_np(q, x[idx], _draw_np(st, idx))
        while p < n_ck and ckpt[p] == j:
            Z[:, p] = z
            p += 1
        t_end = min((j + 1) * delta, horizon)
        if t_end <= tj:
            break
        t = np.full(n_traj, tj)
        idx = np.nonzero(nj <= t_end)[0]
        while idx.size:
            z[idx] += f[x[idx]] * (nj[idx] - t[idx])
            t[idx] = nj[idx]
            u = _draw_np(st, idx)
            x[idx] = np.argmax(u[:, None] < cum[x[idx]], axis=1)
            if jump_mode:
                hit = idx[target[x[idx]] >= 0]
                if hit.size:
                    impulse(hit, t[hit])
            nj[idx] = t[idx] + _hold_np(q, x[idx], _draw_np(st, idx))
            idx = idx[nj[idx] <= t_end]
        z += f[x] * (t_end - t)
    Z[:, n_ck] = z
    return Z, counts, bursts, trace


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _use_numba():
    return _accel.USE_NUMBA and _accel.HAS_NUMBA


def power_iterate(K, inside, U, expc, h0, tol, max_iters, stall_window):
    fn = _power_iterate_nb if _use_numba() else _power_iterate_np
    h, lo, hi, it, status = fn(
        np.ascontiguousarray(K, dtype=np.float64),
        np.ascontiguousarray(inside, dtype=np.bool_),
        np.ascontiguousarray(U, dtype=np.int64),
        np.ascontiguousarray(expc, dtype=np.float64),
        np.ascontiguousarray(h0, dtype=np.float64),
        float(tol), int(max_iters), int(stall_window),
    )
    return h, float(lo), float(hi), int(it), int(status)


def tilde_T(K, inside, U, expc, h):
    return _tilde_T_np(K, inside, U, expc, h)


def stopping_sweeps(K, inside, eG, v0, max_sweeps, tol):
    fn = _stopping_sweeps_nb if _use_numba() else _stopping_sweeps_np
    v, s, change = fn(
        np.ascontiguousarray(K, dtype=np.float64),
        np.ascontiguousarray(inside, dtype=np.bool_),
        np.ascontiguousarray(eG, dtype=np.float64),
        np.ascontiguousarray(v0, dtype=np.float64),
        int(max_sweeps), float(tol),
    )
    return v, int(s), float(change)


def simulate(q, cum, f, cost, target, start, delta, horizon, decide_at_zero, jump_mode,
             seed, first_index, n_traj, ckpt, ring_cap, trace_cap=0):
    """Run ``n_traj`` controlled trajectories starting at stream ``first_index``.

    Returns ``(Z, counts, bursts, trace)`` where ``Z[:, :-1]`` holds exponents at
    the checkpoint grid indices ``ckpt`` and ``Z[:, -1]`` the exponent at the
    horizon.
    """
    fn = _simulate_nb if _use_numba() else _simulate_np
    return fn(
        np.ascontiguousarray(q, dtype=np.float64),
        np.ascontiguousarray(cum, dtype=np.float64),
        np.ascontiguousarray(f, dtype=np.float64),
        np.ascontiguousarray(cost, dtype=np.float64),
        np.ascontiguousarray(target, dtype=np.int64),
        int(start), float(delta), float(horizon), bool(decide_at_zero), bool(jump_mode),
        np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF), int(first_index), int(n_traj),
        np.ascontiguousarray(ckpt, dtype=np.int64), int(ring_cap), int(trace_cap),
    )
