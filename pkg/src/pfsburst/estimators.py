"""Throughput estimators for proportional fair scheduling under on-off traffic.

* GA: Gaussian approximation of instantaneous rates; the opportunistic gain
  with n simultaneously active users is ``1 + (sigma/r) * L(n)`` where L(n) is
  the expected maximum of n standard normals.  Averaging over the binomial
  number of active users gives a closed form.
* MIA: multi-interference analysis, the saturated per-user rates solving a
  coupled fixed-point equation over the per-user SINR laws.
* HA: a load-weighted blend which reduces to GA as the load vanishes and to
  MIA under saturation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from pfsburst import _mia
from pfsburst.errors import CapacityError, ConvergenceError, DomainError
from pfsburst.radio import RateMap
from pfsburst.sinr_model import (
    RateStats,
    SinrModel,
    integrate_sinr,
    log_phi_range,
    log_survival,
    rate_stats,
    sinr_cdf,
)

log = logging.getLogger(__name__)

EXACT_SUM_MAX_USERS = 20


# -- Gaussian order statistics ------------------------------------------------


class GaussianOrderStatTable:
    """Memoised L(N) = E[max of N i.i.d. standard normals]."""

    def __init__(self):
        self.values = {1: 0.0}

    def __getitem__(self, n):
        n = int(n)
        if n < 1:
            raise DomainError("L(N) needs N >= 1")
        if n not in self.values:
            self.values[n] = self._compute(n)
        return self.values[n]

    @staticmethod
    def _compute(n):
        # density of the maximum: n * pdf(x) * cdf(x)^(n-1), evaluated in log space
        def integrand(x):
            return x * math.exp(math.log(n) - 0.5 * x * x - 0.5 * math.log(2 * math.pi)
                                + (n - 1) * special.log_ndtr(x))

        centre = math.sqrt(2.0 * math.log(n)) if n > 1 else 0.0
        val, err = integrate.quad(integrand, -40.0, 40.0, points=[centre - 3, centre, centre + 3],
                                  epsabs=1e-14, epsrel=1e-13, limit=200)
        return val


ORDER_STATS = GaussianOrderStatTable()


def gaussian_max_expectation(n):
    return ORDER_STATS[n]


def _binom_pmf(N, rho):
    n = np.arange(N + 1)
    if N <= 50:
        return special.comb(N, n) * rho ** n * (1.0 - rho) ** (N - n)
    logc = special.gammaln(N + 1) - special.gammaln(n + 1) - special.gammaln(N - n + 1)
    return np.exp(logc + special.xlogy(n, rho) + special.xlog1py(N - n, -rho))


def l_mixture(N, rho):
    """Binomial(N, rho) mixture of L(n) over the number of active users n >= 1."""
    if N < 1 or not 0.0 < rho <= 1.0:
        raise DomainError("need N >= 1 and 0 < rho <= 1")
    if rho == 1.0:
        return ORDER_STATS[N]
    w = _binom_pmf(N, rho)
    return float(sum(w[n] * ORDER_STATS[n] for n in range(1, N + 1)))


# -- cell user sets -------------------------------------------------------------


@dataclass(frozen=True)
class UserModel:
    sinr: SinrModel
    stats: RateStats


@dataclass
class CellUserSet:
    """Users of one cell sharing a rate map, each active with probability `load`."""

    users: Sequence[UserModel]
    load: float
    rate_map: RateMap = field(default_factory=RateMap)
    _mia_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.users = tuple(self.users)
        if not self.users:
            raise DomainError("a cell needs at least one user")
        if not 0.0 < self.load <= 1.0:
            raise DomainError(f"load must lie in (0, 1], got {self.load}")

    @classmethod
    def from_models(cls, models, load, rate_map=None):
        rate_map = rate_map or RateMap()
        return cls([UserModel(m, rate_stats(m, rate_map)) for m in models], load, rate_map)

    @classmethod
    def from_links(cls, links, load, rate_map=None):
        return cls.from_models([SinrModel.from_link(l) for l in links], load, rate_map)

    def with_load(self, load):
        """Same users at another load; shares the saturated MIA solution."""
        other = CellUserSet(self.users, load, self.rate_map)
        other._mia_cache = self._mia_cache
        return other

    @property
    def size(self):
        return len(self.users)

    def stats(self, user):
        return self.users[user].stats


def _busy(N, rho):
    """P(at least one of N users active)."""
    return -math.expm1(N * math.log1p(-rho)) if rho < 1.0 else 1.0


# -- GA -----------------------------------------------------------------------


def rr_rate(user, cell):
    N = cell.size
    return cell.stats(user).mean_rate / N * _busy(N, cell.load)


def ga_rate(user, cell):
    st = cell.stats(user)
    N = cell.size
    return st.mean_rate / N * _busy(N, cell.load) + st.std_rate / N * l_mixture(N, cell.load)


def ga_increment(user, cell, load=None):
    """Opportunistic increment over round robin, the part of the GA gain above 1."""
    rho = cell.load if load is None else load
    if rho <= 0:
        raise DomainError("zero load means no transmission")
    st = cell.stats(user)
    if st.std_rate == 0.0:
        return 0.0
    N = cell.size
    return st.std_rate / st.mean_rate * l_mixture(N, rho) / _busy(N, rho)


def ga_gain(user, cell):
    return 1.0 + ga_increment(user, cell)


def ga_subset_gain(user, cell):
    """GA saturated gain as a function of the active subset (depends on its size only)."""
    st = cell.stats(user)
    ratio = st.std_rate / st.mean_rate

    def gain(subset):
        return 1.0 + ratio * ORDER_STATS[len(subset)]

    return gain


def exact_burst_rate(user, cell, gain_fn: Callable | None = None):
    """Long-run rate by explicit enumeration of every active subset containing `user`.

    ``gain_fn(subset)`` returns the saturated PF gain over round robin of
    `user` when exactly the users of `subset` (a frozenset of indices) are
    active.  Cost is 2^(N-1) calls.
    """
    N = cell.size
    if N > EXACT_SUM_MAX_USERS:
        raise CapacityError(f"subset enumeration limited to {EXACT_SUM_MAX_USERS} users, got {N}")
    gain_fn = gain_fn or ga_subset_gain(user, cell)
    rho = cell.load
    others = [v for v in range(N) if v != user]
    total = 0.0
    for k in range(N):
        for rest in itertools.combinations(others, k):
            V = frozenset((user, *rest))
            size = k + 1
            total += gain_fn(V) / size * rho ** (size - 1) * (1.0 - rho) ** (N - size)
    return cell.stats(user).mean_rate * rho * total


# -- MIA ------------------------------------------------------------------------


@dataclass
class _MiaProblem:
    """Per-user quadrature data that stays fixed while the rates are iterated."""

    c: np.ndarray
    a: np.ndarray
    m: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    atoms: np.ndarray
    cap_mass: np.ndarray
    se_cap: float
    cap: float
    width: float = 1.0

    @classmethod
    def build(cls, cell, width=1.0):
        models = [u.sinr for u in cell.users]
        M = max((len(m.interferer_means) for m in models), default=0)
        a = np.zeros((len(models), max(M, 1)))
        for i, mdl in enumerate(models):
            a[i, :len(mdl.interferer_means)] = mdl.interferer_ratios
        cap = cell.rate_map.sinr_cap
        lo, hi, atoms, mass = [], [], [], []
        for mdl in models:
            # below phi_lo the integrand r(phi) f(phi) is O(head^2)
            l, h = log_phi_range(mdl, head=1e-9)
            lo.append(l)
            hi.append(min(h, math.log(cap)))
            mass.append(math.exp(float(log_survival(mdl, cap))))
            atoms.append(mass[-1] if h > math.log(cap) else 0.0)
        return cls(np.array([m.noise_ratio for m in models]), a,
                   np.array([len(m.interferer_means) for m in models], dtype=np.int64),
                   np.array(lo), np.array(hi), np.array(atoms), np.array(mass),
                   math.log2(1.0 + cap), cap, width)

    def _args(self):
        return (self.width, _mia.GL_NODES, _mia.GL_WEIGHTS, self.c, self.a, self.m, self.se_cap, self.cap)

    def apply(self, u, R):
        return _mia.operator_value(u, R, self.lo[u], self.hi[u], self.atoms[u], self.cap_mass, *self._args())

    def apply_all(self, R):
        return _mia.operator_all(R, self.lo, self.hi, self.atoms, self.cap_mass, *self._args())


@dataclass(frozen=True)
class MiaSolution:
    rates: np.ndarray  # bits/s
    iterations: int
    residual: float
    method: str = "hybr"


def mia_operator(cell, rates, problem=None):
    """Right-hand side of the saturated-rate equations evaluated at `rates` (bits/s)."""
    problem = problem or _MiaProblem.build(cell)
    B = cell.rate_map.bandwidth
    return problem.apply_all(np.asarray(rates, dtype=float) / B) * B


def mia_operator_adaptive(cell, rates, user, epsabs=1e-12, epsrel=1e-10):
    """Independent evaluation of one user's right-hand side with adaptive quadrature.

    Slow; used to cross-check the composite rule of `mia_operator`.
    """
    B = cell.rate_map.bandwidth
    R = np.asarray(rates, dtype=float) / B
    cap = cell.rate_map.sinr_cap
    se_cap = math.log2(1.0 + cap)
    models = [u.sinr for u in cell.users]

    def beat(v, x):
        if x > se_cap:
            return 1.0
        phi = cap if x == se_cap else math.expm1(x * math.log(2.0))
        return float(sinr_cdf(models[v], phi))

    def g(phi):
        se = math.log2(1.0 + phi)
        p = 1.0
        for v in range(len(R)):
            if v != user:
                p *= beat(v, se * R[v] / R[user])
        return se * p

    val = integrate_sinr(models[user], g, upper=cap, epsabs=epsabs, epsrel=epsrel)
    p_cap = math.exp(float(log_survival(models[user], cap)))
    if p_cap > 0:
        p = 1.0
        for v in range(len(R)):
            if v != user:
                p *= beat(v, se_cap * R[v] / R[user])
        val += p_cap * se_cap * p
    return val * B


def _best_response(problem, cell, u, R, xtol=1e-13):
    """Own rate of user `u` that solves its equation with the competitors held fixed.

    The right-hand side falls monotonically in the user's own rate, from the
    solo mean rate towards zero, so the root is bracketed in log-rate.
    """
    R = R.copy()
    hi = cell.stats(u).mean_rate / cell.rate_map.bandwidth

    def g(x):
        R[u] = math.exp(x)
        return math.log(problem.apply(u, R)) - x

    x_hi = math.log(hi)
    x_lo = x_hi - 2.0
    while g(x_lo) < 0:
        x_lo -= 4.0
        if x_lo < x_hi - 700:
            raise ConvergenceError(f"cannot bracket the rate of user {u}")
    if g(x_hi) >= 0:
        return hi
    return math.exp(optimize.brentq(g, x_lo, x_hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def _gauss_seidel(problem, cell, R, damping, tol, max_iter):
    change = math.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for u in range(cell.size):
            target = _best_response(problem, cell, u, R)
            new = R[u] + damping * (target - R[u])
            change = max(change, abs(new - R[u]) / R[u])
            R[u] = new
        if change < tol:
            return R, it
    raise ConvergenceError(f"MIA fixed point not reached in {max_iter} sweeps", residual=change)


def solve_mia(cell, method="hybr", damping=0.5, tol=1e-9, max_iter=500):
    """Saturated per-user PF rates, the fixed point of `mia_operator`.

    Starts from the round-robin rates r_u / N.  ``method="hybr"`` solves
    ``log T(R) - log R = 0`` with MINPACK's hybrid Powell method;
    ``"gauss-seidel"`` sweeps the users, solving each scalar equation exactly
    with the others fixed and moving a `damping` fraction of the way.  A
    failed hybrid solve falls back to the sweep.
    """
    key = (method, damping, tol, max_iter)
    if key in cell._mia_cache:
        return cell._mia_cache[key]
    N = cell.size
    B = cell.rate_map.bandwidth
    R0 = np.array([u.stats.mean_rate for u in cell.users]) / B / N
    if N == 1:
        sol = MiaSolution(R0 * B, 0, 0.0, method)
        cell._mia_cache[key] = sol
        return sol
    problem = _MiaProblem.build(cell)
    used = method
    if method == "hybr":
        def F(x):
            return np.log(problem.apply_all(np.exp(x))) - x

        res = optimize.root(F, np.log(R0), method="hybr", options={"xtol": 1e-13, "maxfev": max_iter})
        R, iters = np.exp(res.x), int(res.nfev)
        # MINPACK may report poor progress once at the quadrature noise floor; judge by the residual
        if np.max(np.abs(np.expm1(F(res.x)))) > tol:
            log.warning("hybrid solve failed (%s); falling back to Gauss-Seidel", res.message)
            R, iters = _gauss_seidel(problem, cell, R0.copy(), damping, tol, max_iter)
            used = "gauss-seidel"
    elif method == "gauss-seidel":
        R, iters = _gauss_seidel(problem, cell, R0.copy(), damping, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = problem.apply_all(R) / R - 1.0
    sol = MiaSolution(R * B, iters, float(np.max(np.abs(resid))), used)
    log.debug("MIA solved by %s in %d evaluations, residual %.2e", used, iters, sol.residual)
    cell._mia_cache[key] = sol
    return sol


def mia_residual(cell, rates, problem=None):
    """Relative residual ``T(R)/R - 1`` of the saturated-rate equation."""
    rates = np.asarray(rates, dtype=float)
    return mia_operator(cell, rates, problem) / rates - 1.0


def mia_saturated_rates(cell):
    return solve_mia(cell).rates


def mia_gain(user, cell):
    N = cell.size
    return float(mia_saturated_rates(cell)[user] / (cell.stats(user).mean_rate / N))


def mia_rate(user, cell):
    """Saturated MIA gain applied to the bursty round-robin rate (exact MIA at full load)."""
    if cell.load == 1.0:
        return float(mia_saturated_rates(cell)[user])
    return mia_gain(user, cell) * rr_rate(user, cell)


# -- HA -------------------------------------------------------------------------


def ha_gain(user, cell):
    """Hybrid gain: GA increment weighted by (1 - rho) plus the MIA increment
    rescaled by the GA unsaturated/saturated increment ratio, weighted by rho."""
    rho = cell.load
    if not 0.0 < rho <= 1.0:
        raise DomainError("load must lie in (0, 1]")
    G_mia = mia_gain(user, cell)
    if rho == 1.0:
        return G_mia
    N = cell.size
    if N == 1:
        return 1.0
    # eta(rho)/eta(1) with the common sigma/r factor cancelled
    ratio = l_mixture(N, rho) / _busy(N, rho) / ORDER_STATS[N]
    eta = ga_increment(user, cell)
    return 1.0 + (1.0 - rho) * eta + rho * ratio * (G_mia - 1.0)


def ha_rate(user, cell):
    if cell.load == 1.0:
        return float(mia_saturated_rates(cell)[user])
    return ha_gain(user, cell) * rr_rate(user, cell)


# -- reports --------------------------------------------------------------------


@dataclass
class EstimateReport:
    mean_rate: np.ndarray
    std_rate: np.ndarray
    rr_rate: np.ndarray
    ga_rate: np.ndarray
    ga_gain: np.ndarray
    mia_sat_rate: np.ndarray
    mia_gain: np.ndarray
    mia_rate: np.ndarray
    ha_gain: np.ndarray
    ha_rate: np.ndarray

    def __len__(self):
        return len(self.rr_rate)


def estimate(cell):
    """All estimator outputs for every user of `cell`."""
    N = cell.size
    sol = solve_mia(cell)
    cols = {k: np.empty(N) for k in EstimateReport.__dataclass_fields__}
    for u in range(N):
        st = cell.stats(u)
        cols["mean_rate"][u] = st.mean_rate
        cols["std_rate"][u] = st.std_rate
        cols["rr_rate"][u] = rr_rate(u, cell)
        cols["ga_rate"][u] = ga_rate(u, cell)
        cols["ga_gain"][u] = ga_gain(u, cell)
        cols["mia_sat_rate"][u] = sol.rates[u]
        cols["mia_gain"][u] = mia_gain(u, cell)
        cols["mia_rate"][u] = mia_rate(u, cell)
        cols["ha_gain"][u] = ha_gain(u, cell)
        cols["ha_rate"][u] = ha_rate(u, cell)
    return EstimateReport(**cols)
