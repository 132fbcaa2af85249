"""Per-TTI single-cell scheduling loop, compiled with numba.

Cells never couple (interferers transmit at full power every TTI), so a
network run is a sequence of independent calls, one per cell, each with its
own xoshiro256** stream.  Exponential variates use the Marsaglia-Tsang
ziggurat (256 layers).
"""

import math

import numba
import numpy as np
from numba import uint64

PF, RR = 0, 1

_ZIG_R = 7.697117470131487


def _ziggurat_tables():
    m = 2.0 ** 53
    de = _ZIG_R
    te = de
    ve = 3.949659822581572e-3
    q = ve / math.exp(-de)
    ke = np.zeros(256)
    we = np.zeros(256)
    fe = np.zeros(256)
    ke[0] = (de / q) * m
    ke[1] = 0.0
    we[0] = q / m
    we[255] = de / m
    fe[0] = 1.0
    fe[255] = math.exp(-de)
    for i in range(254, 0, -1):
        de = -math.log(ve / de + math.exp(-de))
        ke[i + 1] = (de / te) * m
        te = de
        fe[i] = math.exp(-de)
        we[i] = de / m
    return ke, we, fe


ZIG_KE, ZIG_WE, ZIG_FE = _ziggurat_tables()


def seed_state(seed_sequence):
    state = seed_sequence.generate_state(4, np.uint64)
    if not state.any():
        state[0] = 1
    return state


@numba.njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@numba.njit(inline="always", cache=True)
def next_u64(s):
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    result = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


@numba.njit(inline="always", cache=True)
def uniform(s):
    """Uniform on (0, 1]."""
    return float((next_u64(s) >> uint64(11)) + uint64(1)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def exponential(s, ke, we, fe):
    while True:
        b = next_u64(s)
        iz = b & uint64(255)
        jz = float(b >> uint64(11))
        if jz < ke[iz]:
            return jz * we[iz]
        if iz == 0:
            return _ZIG_R - math.log(uniform(s))
        x = jz * we[iz]
        if fe[iz] + uniform(s) * (fe[iz - 1] - fe[iz]) < math.exp(-x):
            return x


@numba.njit(cache=True)
def draw_exponential(n, s, ke, we, fe):
    out = np.empty(n)
    for i in range(n):
        out[i] = exponential(s, ke, we, fe)
    return out


@numba.njit(cache=True)
def _sinr(u, serving, interf, m, noise, s, ke, we, fe):
    q = noise
    for i in range(m[u]):
        q += interf[u, i] * exponential(s, ke, we, fe)
    return serving[u] * exponential(s, ke, we, fe) / q


@numba.njit(cache=True)
def draw_sinr(n, serving, interf, m, noise, s, ke, we, fe):
    out = np.empty(n)
    for k in range(n):
        out[k] = _sinr(0, serving, interf, m, noise, s, ke, we, fe)
    return out


@numba.njit(cache=True)
def simulate_cell(serving, interf, m, noise, bandwidth, cap, tti,
                  alpha, beta, lam, saturated, traffic_warmup, stationary,
                  kind, tc, reset, warm_ttis, meas_ttis, s, ke, we, fe):
    """Run one cell; returns per-user delivered bits, scheduled TTIs, active TTIs,
    session starts and the cell's delivered bits summed at scheduling time."""
    n = serving.shape[0]
    on = np.zeros(n, dtype=np.bool_)
    fresh = np.ones(n, dtype=np.bool_)
    nxt = np.empty(n)
    avg = np.zeros(n)
    bits = np.zeros(n)
    sched = np.zeros(n, dtype=np.int64)
    active = np.zeros(n, dtype=np.int64)
    starts = np.zeros(n, dtype=np.int64)
    inv_a = 1.0 / alpha
    rho = 1.0 / (1.0 + (alpha - 1.0) / (alpha * beta * lam))
    w = 1.0 / tc
    cell_bits = 0.0

    for u in range(n):
        if saturated:
            on[u] = True
            nxt[u] = math.inf
        else:
            # stationary start (or Off with a memoryless residual), then the warm-up in continuous time
            st = False
            if stationary and uniform(s) <= rho:
                st = True
                v = uniform(s)
                if v <= inv_a:
                    res = beta * (alpha * v) ** (-1.0 / (alpha - 1.0))
                else:
                    res = beta * alpha * (1.0 - v) / (alpha - 1.0)
                t = -traffic_warmup + res
            else:
                t = -traffic_warmup + exponential(s, ke, we, fe) / lam
            while t <= 0.0:
                st = not st
                if st:
                    t += beta * uniform(s) ** (-inv_a)
                else:
                    t += exponential(s, ke, we, fe) / lam
            on[u] = st
            nxt[u] = t

    last = -1
    rates = np.zeros(n)
    for k in range(warm_ttis + meas_ttis):
        now = k * tti
        measuring = k >= warm_ttis
        for u in range(n):
            while nxt[u] <= now:
                on[u] = not on[u]
                if on[u]:
                    fresh[u] = True
                    if measuring:
                        starts[u] += 1
                    nxt[u] += beta * uniform(s) ** (-inv_a)
                else:
                    nxt[u] += exponential(s, ke, we, fe) / lam
        chosen = -1
        r_chosen = 0.0
        if kind == PF:
            best = -1.0
            ties = 0
            for u in range(n):
                if not on[u]:
                    continue
                phi = _sinr(u, serving, interf, m, noise, s, ke, we, fe)
                r = bandwidth * math.log2(1.0 + min(phi, cap))
                rates[u] = r
                if fresh[u]:
                    if reset or avg[u] == 0.0:
                        avg[u] = r
                    fresh[u] = False
                metric = r / max(avg[u], 1e-300)
                if metric > best:
                    best = metric
                    chosen = u
                    ties = 1
                elif metric == best:
                    ties += 1
                    if uniform(s) * ties <= 1.0:
                        chosen = u
            if chosen >= 0:
                r_chosen = rates[chosen]
                for u in range(n):
                    if on[u]:
                        avg[u] = (1.0 - w) * avg[u] + (w * rates[u] if u == chosen else 0.0)
        else:
            for j in range(1, n + 1):
                u = (last + j) % n
                if on[u]:
                    chosen = u
                    break
            if chosen >= 0:
                last = chosen
                phi = _sinr(chosen, serving, interf, m, noise, s, ke, we, fe)
                r_chosen = bandwidth * math.log2(1.0 + min(phi, cap))
        if measuring:
            for u in range(n):
                if on[u]:
                    active[u] += 1
            if chosen >= 0:
                bits[chosen] += r_chosen * tti
                sched[chosen] += 1
                cell_bits += r_chosen * tti
    return bits, sched, active, starts, cell_bits
