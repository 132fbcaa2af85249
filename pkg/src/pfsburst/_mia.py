"""Compiled pieces of the saturated-traffic MIA rate operator.

Rates are in spectral-efficiency units (bits/s/Hz) throughout this module.
The integral for user u runs over s = log(phi) on composite Gauss-Legendre
panels, with extra panel edges where a competitor's threshold reaches the cap
(the integrand jumps there).
"""

import math

import numba
import numpy as np

LN2 = math.log(2.0)
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@numba.njit(cache=True)
def _log_survival(phi, c, a, m):
    if phi == 0.0:
        return 0.0
    if math.isinf(phi):
        return -math.inf
    sa = 0.0
    for i in range(m):
        sa += a[i]
    acc = -c * phi
    if phi * sa < 1e-2:
        for i in range(m):
            acc -= math.log1p(a[i] * phi)
    else:
        prod = 1.0
        for i in range(m):
            prod *= 1.0 + a[i] * phi
        acc -= math.log(prod)
    return acc


@numba.njit(cache=True)
def _beat_prob(x, c, a, m, se_cap, cap):
    """P(competitor spectral efficiency < x) for the capped Shannon map."""
    if x > se_cap:
        return 1.0
    if x == se_cap:
        phi = cap
    else:
        phi = math.expm1(x * LN2)
    return -math.expm1(_log_survival(phi, c, a, m))


@numba.njit(cache=True)
def _panel_sum(u, R, s0, s1, width, gx, gw, c, a, m, se_cap, cap):
    n = R.shape[0]
    npan = max(1, int(math.ceil((s1 - s0) / width)))
    h = (s1 - s0) / npan
    total = 0.0
    for p in range(npan):
        mid = s0 + (p + 0.5) * h
        for j in range(gx.shape[0]):
            s = mid + 0.5 * h * gx[j]
            phi = math.exp(s)
            hz = c[u]
            for i in range(m[u]):
                hz += a[u, i] / (1.0 + a[u, i] * phi)
            dens = math.exp(_log_survival(phi, c[u], a[u], m[u])) * hz * phi
            se = math.log1p(phi) / LN2
            prob = 1.0
            for v in range(n):
                if v == u:
                    continue
                prob *= _beat_prob(se * R[v] / R[u], c[v], a[v], m[v], se_cap, cap)
                if prob == 0.0:
                    break
            total += 0.5 * h * gw[j] * dens * se * prob
    return total


@numba.njit(cache=True)
def operator_value(u, R, lo, hi, atom, cap_mass, width, gx, gw, c, a, m, se_cap, cap):
    """Right-hand side of the saturated-rate equation for user `u`.

    `cap_mass[v]` is P(SINR_v > cap); competitors with negligible mass there
    add no panel edge, which keeps the rule smooth in R.
    """
    n = R.shape[0]
    breaks = np.empty(n + 1)
    nb = 0
    breaks[nb] = lo
    nb += 1
    for v in range(n):
        k = R[v] / R[u]
        if v != u and k > 1.0 and cap_mass[v] > 1e-15:
            phi_star = math.expm1(math.log1p(cap) / k)
            if phi_star > 0.0:
                sb = math.log(phi_star)
                if lo < sb < hi:
                    breaks[nb] = sb
                    nb += 1
    breaks[nb] = hi
    nb += 1
    b = np.sort(breaks[:nb])
    total = 0.0
    for i in range(nb - 1):
        if b[i + 1] > b[i]:
            total += _panel_sum(u, R, b[i], b[i + 1], width, gx, gw, c, a, m, se_cap, cap)
    if atom > 0.0:
        prob = 1.0
        for v in range(n):
            if v != u:
                prob *= _beat_prob(se_cap * R[v] / R[u], c[v], a[v], m[v], se_cap, cap)
        total += atom * se_cap * prob
    return total


@numba.njit(cache=True)
def operator_all(R, lo, hi, atom, cap_mass, width, gx, gw, c, a, m, se_cap, cap):
    out = np.empty(R.shape[0])
    for u in range(R.shape[0]):
        out[u] = operator_value(u, R, lo[u], hi[u], atom[u], cap_mass, width, gx, gw, c, a, m, se_cap, cap)
    return out
