"""Per-user SINR law under Rayleigh fading with independent exponential interferers.

Only power ratios matter, so a model is stored as the normalised noise
``c = noise / serving`` and interferer ratios ``a_i = p_i / serving``:

    P(SINR > x) = exp(-c x) * prod_i 1 / (1 + a_i x)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from pfsburst.errors import ConvergenceError, DomainError
from pfsburst.radio import RateMap

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SinrModel:
    serving_mean: float
    interferer_means: tuple = ()
    noise: float = 1.0

    def __post_init__(self):
        if self.serving_mean <= 0:
            raise DomainError("serving mean power must be positive")
        if self.noise <= 0:
            raise DomainError("noise must be positive")
        im = tuple(float(p) for p in self.interferer_means)
        if any(p < 0 for p in im):
            raise DomainError("interferer means must be non-negative")
        object.__setattr__(self, "interferer_means", tuple(p for p in im if p > 0))

    @classmethod
    def from_link(cls, link):
        return cls(link.serving_mean_power, link.interferer_mean_powers, link.noise_power)

    @property
    def noise_ratio(self):
        return self.noise / self.serving_mean

    @property
    def interferer_ratios(self):
        return np.asarray(self.interferer_means, dtype=float) / self.serving_mean

    def scaled(self, c):
        return SinrModel(c * self.serving_mean, tuple(c * p for p in self.interferer_means), c * self.noise)


@dataclass(frozen=True)
class RateStats:
    mean_rate: float
    std_rate: float

    def __post_init__(self):
        if self.mean_rate < 0 or self.std_rate < 0:
            raise DomainError("rate moments must be non-negative")


def log_survival(model, phi):
    """log P(SINR > phi), summed in log space (interferer tiers are often near-equal)."""
    x = np.asarray(phi, dtype=float)
    a = model.interferer_ratios
    out = -model.noise_ratio * x
    if a.size:
        out = out - np.log1p(np.multiply.outer(x, a)).sum(axis=-1)
    return out


def sinr_cdf(model, phi):
    x = np.asarray(phi, dtype=float)
    if np.any(x < 0):
        raise DomainError("phi must be non-negative")
    F = -np.expm1(log_survival(model, x))
    return float(F) if F.ndim == 0 else F


def sinr_pdf(model, phi):
    x = np.asarray(phi, dtype=float)
    if np.any(x <= 0):
        raise DomainError("the density is defined for phi > 0")
    a = model.interferer_ratios
    hazard = model.noise_ratio + (a / (1.0 + np.multiply.outer(x, a))).sum(axis=-1)
    f = np.exp(log_survival(model, x)) * hazard
    return float(f) if f.ndim == 0 else f


def total_ratio(model):
    return model.noise_ratio + float(model.interferer_ratios.sum())


def log_phi_range(model, tail_log=-45.0, head=1e-15):
    """Bounds in log(phi) outside which the SINR has negligible mass.

    Below: F(phi) <= phi * (c + sum a) < `head`. Above: log survival < `tail_log`.
    """
    lo = math.log(head / total_ratio(model))
    s_hi = max(lo + 1.0, 0.0)
    while float(log_survival(model, math.exp(s_hi))) > tail_log:
        s_hi += 2.0
    # bisection for a tighter upper bound
    s_lo_b = s_hi - 2.0
    for _ in range(40):
        mid = 0.5 * (s_lo_b + s_hi)
        if float(log_survival(model, math.exp(mid))) > tail_log:
            s_lo_b = mid
        else:
            s_hi = mid
    return lo, s_hi


def _quad(f, a, b, points=None, epsabs=1e-10, epsrel=1e-8, limit=400):
    """scipy quad that raises ConvergenceError instead of warning when the tolerance is missed."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=points, epsabs=epsabs, epsrel=epsrel, limit=limit)
        except integrate.IntegrationWarning as w:
            reason = " ".join(str(w).split(".")[0].split())
            raise ConvergenceError(f"quadrature missed its tolerance: {reason}", residual=math.nan) from w
    if not math.isfinite(val) or err > max(epsabs, epsrel * abs(val)) * 10:
        raise ConvergenceError(f"quadrature did not converge (estimate {val}, error {err})", residual=err)
    return val


def integrate_sinr(model, g, upper=math.inf, epsabs=1e-10, epsrel=1e-8):
    """``int_0^upper g(phi) f(phi) dphi`` with the substitution phi = exp(s).

    Works in log(phi) so that both the noise-limited exponential tail and the
    algebraic interference tail are resolved by the adaptive rule.
    """
    lo, hi = log_phi_range(model)
    if upper < math.inf:
        hi = min(hi, math.log(upper))
    if hi <= lo:
        return 0.0

    def h(s):
        phi = math.exp(s)
        return g(phi) * sinr_pdf(model, phi) * phi

    pts = [p for p in np.arange(math.ceil(lo), hi, 4.0)][1:]
    return _quad(h, lo, hi, points=pts or None, epsabs=epsabs, epsrel=epsrel)


def rate_stats(model, rate_map: RateMap, epsabs=1e-10, epsrel=1e-8):
    """Mean and standard deviation of the capped Shannon rate under the SINR law.

    Integrates spectral efficiency below the cap adaptively and adds the cap
    atom ``log2(1 + cap) * P(SINR > cap)`` in closed form.
    """
    cap = rate_map.sinr_cap
    se_cap = math.log2(1.0 + cap)
    p_cap = math.exp(float(log_survival(model, cap)))
    m1 = integrate_sinr(model, lambda x: math.log1p(x) / LN2, upper=cap, epsabs=epsabs, epsrel=epsrel)
    m2 = integrate_sinr(model, lambda x: (math.log1p(x) / LN2) ** 2, upper=cap, epsabs=epsabs, epsrel=epsrel)
    m1 += se_cap * p_cap
    m2 += se_cap ** 2 * p_cap
    var = max(m2 - m1 * m1, 0.0)
    B = rate_map.bandwidth
    return RateStats(B * m1, B * math.sqrt(var))
