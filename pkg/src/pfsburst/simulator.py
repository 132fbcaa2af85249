"""Ground-truth per-TTI simulation of PF and round-robin scheduling.

Each user's on-off session process advances in continuous time and is
sampled at TTI boundaries.  In every TTI the active users of a cell draw
fresh Rayleigh-faded SINRs, the scheduler picks one of them, and the PF
averages of active users are updated with an exponentially weighted moving
average of horizon `pf_time_constant` TTIs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from pfsburst import _simkernel as K
from pfsburst.errors import ConfigError
from pfsburst.radio import CellLayout, RateMap
from pfsburst.traffic import OnOffConfig, duty_cycle, warmup_seconds


class SchedulerKind(enum.Enum):
    PROPORTIONAL_FAIR = "proportional_fair"
    ROUND_ROBIN = "round_robin"


class ColdStart(enum.Enum):
    RESET_PER_SESSION = "reset_per_session"
    PERSIST = "persist"


@dataclass(frozen=True)
class SchedulerConfig:
    kind: SchedulerKind = SchedulerKind.PROPORTIONAL_FAIR
    pf_time_constant: float = 1000.0
    tti_duration: float = 1e-3
    cold_start: ColdStart = ColdStart.RESET_PER_SESSION

    def __post_init__(self):
        object.__setattr__(self, "kind", SchedulerKind(self.kind))
        object.__setattr__(self, "cold_start", ColdStart(self.cold_start))
        if self.pf_time_constant < 2:
            raise ConfigError("pf_time_constant must be at least 2 TTIs")
        if self.tti_duration <= 0:
            raise ConfigError("tti_duration must be positive")


@dataclass
class Scenario:
    """A drop: per-cell lists of LinkBudgets plus the traffic model (None = saturated)."""

    cells: list
    rate_map: RateMap = field(default_factory=RateMap)
    traffic: OnOffConfig | None = None
    layout: CellLayout | None = None

    @property
    def load(self):
        return 1.0 if self.traffic is None else duty_cycle(self.traffic)

    @property
    def n_users(self):
        return sum(len(c) for c in self.cells)

    def with_traffic(self, traffic):
        return Scenario(self.cells, self.rate_map, traffic, self.layout)


@dataclass
class SimReport:
    cell: np.ndarray
    user: np.ndarray
    rate: np.ndarray  # bits/s averaged over the whole measured horizon, off periods included
    scheduled_share: np.ndarray
    active_share: np.ndarray
    active_rate: np.ndarray  # bits/s averaged over the user's own active TTIs
    sessions: np.ndarray
    cell_bits: np.ndarray
    seed: int | None
    warmup_ttis: int
    traffic_warmup_s: float
    measured_ttis: int
    tti_duration: float
    load: float

    @property
    def measured_duty_cycle(self):
        return float(self.active_share.mean())

    def activity_scaled_rate(self):
        """Long-run rate estimated as configured load x rate while active.

        Converges to the same limit as `rate` but does not carry the (heavy
        tailed) fluctuation of each user's own realised on-fraction.
        """
        out = np.where(self.active_share > 0, self.load * self.active_rate, np.nan)
        return out

    def rates(self, basis="time"):
        if basis == "time":
            return self.rate
        if basis == "activity":
            return self.activity_scaled_rate()
        raise ValueError(f"unknown basis {basis!r}")


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def cell_arrays(links):
    serving = np.array([l.serving_mean_power for l in links])
    M = max((len(l.interferer_mean_powers) for l in links), default=0)
    interf = np.zeros((len(links), max(M, 1)))
    m = np.zeros(len(links), dtype=np.int64)
    for i, l in enumerate(links):
        p = np.asarray(l.interferer_mean_powers, dtype=float)
        interf[i, :p.size] = p
        m[i] = p.size
    noise = links[0].noise_power
    if any(l.noise_power != noise for l in links):
        raise ConfigError("users of one cell must share the noise power")
    return serving, interf, m, noise


def run(scenario, scheduler=SchedulerConfig(), horizon=1_000_000, seed=0, warmup_ttis=None,
        stationary_start=True):
    """Simulate `horizon` TTIs per cell, the first `warmup_ttis` of which are discarded.

    `warmup_ttis` defaults to five PF time constants.  The on-off processes are
    additionally run for ``10 * (D_on + D_off)`` seconds of continuous time
    before TTI 0, starting from their stationary law (On with probability
    rho and an equilibrium residual) unless `stationary_start` is False, in
    which case every user starts Off with an exponential residual.
    """
    if warmup_ttis is None:
        warmup_ttis = int(5 * scheduler.pf_time_constant)
    if horizon <= warmup_ttis:
        raise ConfigError(f"horizon ({horizon}) must exceed the warm-up ({warmup_ttis} TTIs)")
    ss = _seed_sequence(seed)
    streams = ss.spawn(len(scenario.cells))
    tr = scenario.traffic
    saturated = tr is None
    alpha, beta, lam = (2.0, 1.0, 1.0) if saturated else (tr.alpha, tr.beta, tr.lambda_off)
    traffic_warmup = 0.0 if saturated else warmup_seconds(tr)
    kind = K.PF if scheduler.kind is SchedulerKind.PROPORTIONAL_FAIR else K.RR
    reset = scheduler.cold_start is ColdStart.RESET_PER_SESSION
    meas = horizon - warmup_ttis
    cols = {k: [] for k in ("cell", "user", "bits", "sched", "active", "starts")}
    cell_bits = []
    for c, links in enumerate(scenario.cells):
        serving, interf, m, noise = cell_arrays(links)
        state = K.seed_state(streams[c])
        bits, sched, active, starts, cb = K.simulate_cell(
            serving, interf, m, noise, scenario.rate_map.bandwidth, scenario.rate_map.sinr_cap,
            scheduler.tti_duration, alpha, beta, lam, saturated, traffic_warmup, stationary_start,
            kind, float(scheduler.pf_time_constant), reset, int(warmup_ttis), int(meas),
            state, K.ZIG_KE, K.ZIG_WE, K.ZIG_FE)
        n = len(links)
        cols["cell"].append(np.full(n, c))
        cols["user"].append(np.arange(n))
        cols["bits"].append(bits)
        cols["sched"].append(sched)
        cols["active"].append(active)
        cols["starts"].append(starts)
        cell_bits.append(cb)
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    T = meas * scheduler.tti_duration
    active_time = cat["active"] * scheduler.tti_duration
    with np.errstate(invalid="ignore", divide="ignore"):
        active_rate = np.where(cat["active"] > 0, cat["bits"] / active_time, 0.0)
    return SimReport(
        cell=cat["cell"], user=cat["user"], rate=cat["bits"] / T,
        scheduled_share=cat["sched"] / meas, active_share=cat["active"] / meas,
        active_rate=active_rate, sessions=cat["starts"], cell_bits=np.array(cell_bits),
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        warmup_ttis=int(warmup_ttis), traffic_warmup_s=traffic_warmup, measured_ttis=int(meas),
        tti_duration=scheduler.tti_duration, load=scenario.load)


@dataclass
class ErrorReport:
    errors: np.ndarray  # NaN where excluded
    excluded: np.ndarray

    @property
    def valid(self):
        return self.errors[~self.excluded]

    @property
    def n_excluded(self):
        return int(self.excluded.sum())

    def summary(self):
        e = self.valid
        if e.size == 0:
            nan = math.nan
            return {"signed_mean": nan, "mean_abs": nan, "p5": nan, "p95": nan, "n": 0,
                    "n_excluded": self.n_excluded}
        return {"signed_mean": float(e.mean()), "mean_abs": float(np.abs(e).mean()),
                "p5": float(np.percentile(e, 5)), "p95": float(np.percentile(e, 95)),
                "n": int(e.size), "n_excluded": self.n_excluded}


def measure_error(sim, estimated, basis="time"):
    """Relative error (estimated - simulated) / simulated per user.

    Users with zero simulated rate (never scheduled) are excluded and counted.
    `estimated` is an array aligned with the SimReport rows.
    """
    simulated = np.asarray(sim.rates(basis) if isinstance(sim, SimReport) else sim, dtype=float)
    est = np.asarray(estimated, dtype=float)
    if est.shape != simulated.shape:
        raise ValueError("estimate and simulation cover different users")
    excluded = ~(simulated > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.where(excluded, np.nan, (est - simulated) / simulated)
    return ErrorReport(err, excluded)
