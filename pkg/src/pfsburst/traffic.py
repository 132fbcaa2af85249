"""Semi-Markov on-off session process: Pareto on-periods, exponential off-periods."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from pfsburst.errors import DomainError


class Phase(enum.Enum):
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class OnOffConfig:
    """Pareto(alpha, beta) on-durations and exponential(lambda_off) off-durations, in seconds."""

    alpha: float
    beta: float
    lambda_off: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise DomainError(f"alpha must exceed 1 for a finite mean on-duration, got {self.alpha}")
        if self.beta <= 0 or self.lambda_off <= 0:
            raise DomainError("beta and lambda_off must be positive")

    @classmethod
    def for_load(cls, alpha, beta, rho):
        return cls(alpha, beta, lambda_for_load(alpha, beta, rho))

    @property
    def rho(self):
        return duty_cycle(self)


@dataclass
class SessionState:
    phase: Phase
    remaining: float

    def __post_init__(self):
        if self.remaining <= 0:
            raise DomainError("remaining duration must be positive")


def mean_on(config):
    if config.alpha <= 1:
        raise DomainError("infinite mean on-duration for alpha <= 1")
    return config.alpha * config.beta / (config.alpha - 1.0)


def mean_off(config):
    return 1.0 / config.lambda_off


def duty_cycle(config):
    a, b, lam = config.alpha, config.beta, config.lambda_off
    return 1.0 / (1.0 + (a - 1.0) / (a * b * lam))


def lambda_for_load(alpha, beta, rho_target):
    """Off-rate that gives long-run on-fraction `rho_target` (inverse of `duty_cycle`)."""
    if not 0.0 < rho_target < 1.0:
        raise DomainError(f"target load must lie in (0, 1), got {rho_target}")
    if alpha <= 1:
        raise DomainError("alpha must exceed 1")
    return (alpha - 1.0) * rho_target / (alpha * beta * (1.0 - rho_target))


def pareto_from_uniform(config, u):
    """Inverse-CDF Pareto sample ``beta * u**(-1/alpha)`` for ``u`` in (0, 1]."""
    return config.beta * np.power(u, -1.0 / config.alpha)


def sample_duration(config, phase, rng, size=None):
    if Phase(phase) is Phase.ON:
        u = 1.0 - rng.random(size)  # (0, 1]
        d = pareto_from_uniform(config, u)
    else:
        d = rng.exponential(1.0 / config.lambda_off, size)
    return float(d) if size is None else d


def initial_state(config, rng):
    """Off with a memoryless exponential residual; callers discard a warm-up afterwards."""
    return SessionState(Phase.OFF, float(rng.exponential(1.0 / config.lambda_off)))


def residual_on_from_uniform(config, u):
    """Equilibrium (forward-recurrence) residual of a Pareto on-period, by inversion.

    Survival: ``(1/alpha) * (beta/x)**(alpha-1)`` for x >= beta and
    ``1 - (alpha-1) x / (alpha beta)`` below.  The mean is infinite for
    alpha < 2 but the law itself is proper, so it can be sampled exactly.
    """
    a, b = config.alpha, config.beta
    u = np.asarray(u, dtype=float)
    tail = b * np.power(np.maximum(a * u, 1e-300), -1.0 / (a - 1.0))
    body = b * a * (1.0 - u) / (a - 1.0)
    return np.where(u <= 1.0 / a, tail, body)


def stationary_state(config, rng):
    """A draw from the stationary on/off law: On with probability rho and an equilibrium residual."""
    if rng.random() < duty_cycle(config):
        return SessionState(Phase.ON, float(residual_on_from_uniform(config, 1.0 - rng.random())))
    return SessionState(Phase.OFF, float(rng.exponential(1.0 / config.lambda_off)))


def warmup_seconds(config):
    return 10.0 * (mean_on(config) + mean_off(config))


def on_fraction(config, horizon, rng, warmup=None, stationary=True, chunk=65536):
    """Fraction of [0, horizon] seconds spent On by one user trajectory.

    The trajectory starts at ``-warmup`` (default ``warmup_seconds``) either
    from the stationary law or, with ``stationary=False``, Off with an
    exponential residual.  Durations are drawn in vectorised chunks.
    """
    if warmup is None:
        warmup = warmup_seconds(config)
    state = stationary_state(config, rng) if stationary else initial_state(config, rng)
    on_time = 0.0
    if state.phase is Phase.ON:
        on_time += max(0.0, min(-warmup + state.remaining, horizon))
        t = -warmup + state.remaining + sample_duration(config, Phase.OFF, rng)
    else:
        t = -warmup + state.remaining
    cycle = mean_on(config) + mean_off(config)
    chunk = int(min(chunk, 16 + 1.2 * (horizon + warmup) / cycle))
    while t < horizon:
        on = sample_duration(config, Phase.ON, rng, chunk)
        off = sample_duration(config, Phase.OFF, rng, chunk)
        ends_on = t + np.cumsum(on + off) - off
        starts_on = ends_on - on
        s = np.clip(starts_on, 0.0, horizon)
        e = np.clip(ends_on, 0.0, horizon)
        on_time += float(np.sum(e - s))
        t = float(ends_on[-1] + off[-1])
    return on_time / horizon


def snapshot_active(config, n_users, at, rng):
    """On/off states of `n_users` independent users observed at time `at` after a cold Off start."""
    active = np.zeros(n_users, dtype=bool)
    for i in range(n_users):
        t = float(rng.exponential(1.0 / config.lambda_off))
        on = False
        while t <= at:
            on = not on
            t += sample_duration(config, Phase.ON if on else Phase.OFF, rng)
        active[i] = on
    return active
