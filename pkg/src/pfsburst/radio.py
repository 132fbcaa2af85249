"""Link budget, hexagonal layout and per-TTI channel sampling.

Mean received powers are deterministic per drop (path loss plus lognormal
shadowing); instantaneous powers add unit-mean exponential (Rayleigh) fading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pfsburst.errors import DomainError

THERMAL_NOISE_DBM_HZ = -174.0


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def noise_power(bandwidth_hz, noise_figure_db):
    """Thermal noise power in watts over `bandwidth_hz`."""
    return float(dbm_to_watt(THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db))


def path_loss_db(distance_m):
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def large_scale_gain(distance_m, shadowing_db=0.0):
    """Linear path gain ``10^(-PL/10) * 10^(shadow/10)``.

    Scalar inputs give a float; arrays broadcast.
    """
    g = 10.0 ** ((np.asarray(shadowing_db, dtype=float) - path_loss_db(distance_m)) / 10.0)
    return float(g) if g.ndim == 0 else g


# -- layout -----------------------------------------------------------------

# neighbour directions of a hex lattice in axial coordinates
_AXIAL_DIRS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))


def _axial_to_xy(q, r, isd):
    return isd * (q + r / 2.0), isd * r * math.sqrt(3.0) / 2.0


def _hex_ring_axial(rings):
    cells = [(0, 0)]
    for k in range(1, rings + 1):
        q, r = -k, k  # direction 4 scaled by k, then walk the ring
        for dq, dr in _AXIAL_DIRS:
            for _ in range(k):
                cells.append((q, r))
                q, r = q + dq, r + dr
    return cells


@dataclass(frozen=True)
class CellLayout:
    """Base-station sites of a hexagonal cluster.

    With `wraparound`, the cluster tiles the plane and every distance is taken
    to the nearest periodic image of a site, so all cells see the same
    interference geometry.
    """

    bs_positions: np.ndarray
    cell_radius: float
    wraparound: bool = False
    isd: float = field(default=0.0)
    shifts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        object.__setattr__(self, "bs_positions", pos)
        if pos.shape[0] < 1 or pos.shape[1] != 2:
            raise DomainError("layout needs at least one 2-D base-station position")
        if self.cell_radius <= 0:
            raise DomainError("cell_radius must be positive")
        if pos.shape[0] > 1:
            d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            if np.any(d[~np.eye(len(pos), dtype=bool)] <= 0):
                raise DomainError("base stations must be at distinct positions")
        if self.shifts is None:
            object.__setattr__(self, "shifts", np.zeros((1, 2)))

    @property
    def n_cells(self):
        return self.bs_positions.shape[0]

    def distances(self, points):
        """Distances from `points` (P, 2) to every site, shape (P, n_cells)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        images = self.bs_positions[None, :, :] + self.shifts[:, None, :]  # (S, C, 2)
        d = np.linalg.norm(p[:, None, None, :] - images[None, :, :, :], axis=-1)
        return d.min(axis=1)

    def contains(self, cell, points):
        """Whether points lie in the hexagonal (Voronoi) area of `cell`."""
        rel = np.atleast_2d(points) - self.bs_positions[cell]
        half = self.isd / 2.0 + 1e-9
        ok = np.ones(len(rel), dtype=bool)
        for ang in (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0):
            ok &= np.abs(rel[:, 0] * math.cos(ang) + rel[:, 1] * math.sin(ang)) <= half
        return ok


def hex_layout(rings=2, isd=500.0, wraparound=True):
    """Hexagonal cluster with `rings` tiers around a centre site.

    The wrap-around images of a cluster of ``R`` rings sit at the six lattice
    translations obtained by rotating axial vector ``(2R+1, -R)``.
    """
    if rings < 0 or isd <= 0:
        raise DomainError("rings must be >= 0 and isd positive")
    axial = _hex_ring_axial(rings)
    pos = np.array([_axial_to_xy(q, r, isd) for q, r in axial])
    shifts = [(0.0, 0.0)]
    if wraparound and rings > 0:
        q, r = 2 * rings + 1, -rings
        for _ in range(6):
            shifts.append(_axial_to_xy(q, r, isd))
            q, r = -r, q + r  # 60 degree rotation in axial coordinates
    return CellLayout(pos, cell_radius=isd / math.sqrt(3.0), wraparound=wraparound and rings > 0,
                      isd=isd, shifts=np.array(shifts))


def drop_users(layout, cell, n, rng, min_distance=35.0):
    """Uniform positions inside the hexagon of `cell`, at least `min_distance` from its site."""
    out = np.empty((0, 2))
    R = layout.cell_radius
    centre = layout.bs_positions[cell]
    while len(out) < n:
        cand = centre + rng.uniform(-R, R, size=(4 * n, 2))
        keep = layout.contains(cell, cand)
        keep &= np.linalg.norm(cand - centre, axis=1) >= min_distance
        out = np.vstack([out, cand[keep]])
    return out[:n]


# -- link budget and channel --------------------------------------------------


@dataclass(frozen=True)
class LinkBudget:
    """Mean powers seen by one user; serving mean = tx_power * large_scale_gain."""

    tx_power: float
    large_scale_gain: float
    interferer_mean_powers: tuple = ()
    noise_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "interferer_mean_powers",
                           tuple(float(p) for p in self.interferer_mean_powers))
        if self.tx_power <= 0 or self.large_scale_gain <= 0:
            raise DomainError("serving mean power must be positive")
        if any(p < 0 for p in self.interferer_mean_powers):
            raise DomainError("interferer powers must be non-negative")
        if self.noise_power <= 0:
            raise DomainError("noise power must be positive")

    @property
    def serving_mean_power(self):
        return self.tx_power * self.large_scale_gain

    @classmethod
    def from_powers(cls, serving, interferers=(), noise=1.0):
        return cls(tx_power=1.0, large_scale_gain=serving, interferer_mean_powers=tuple(interferers),
                   noise_power=noise)


@dataclass(frozen=True)
class ChannelSample:
    serving_power: float
    interferer_powers: tuple
    sinr: float
    noise_power: float = 0.0

    @property
    def total_power(self):
        return self.serving_power + sum(self.interferer_powers) + self.noise_power


def sample_channel(link, rng):
    """One Rayleigh-faded draw of the serving and interfering powers."""
    serving = link.serving_mean_power * rng.exponential()
    interf = tuple(p * rng.exponential() for p in link.interferer_mean_powers)
    sinr = serving / (sum(interf) + link.noise_power)
    return ChannelSample(serving, interf, sinr, link.noise_power)


def sample_sinr(link, n, rng):
    """`n` independent instantaneous SINR draws (vectorised `sample_channel`)."""
    serving = link.serving_mean_power * rng.exponential(size=n)
    interf = np.asarray(link.interferer_mean_powers)
    denom = link.noise_power
    if interf.size:
        denom = denom + rng.exponential(size=(n, interf.size)) @ interf
    return serving / denom


@dataclass(frozen=True)
class RateMap:
    """Capped Shannon map ``bandwidth * log2(1 + min(sinr, sinr_cap))``."""

    bandwidth: float = 180e3
    sinr_cap: float = 1e6

    def __post_init__(self):
        if self.bandwidth <= 0 or self.sinr_cap <= 0:
            raise DomainError("bandwidth and sinr_cap must be positive")

    @property
    def max_rate(self):
        return self.bandwidth * math.log2(1.0 + self.sinr_cap)


def rate(rate_map, sinr):
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise DomainError("sinr must be non-negative")
    r = rate_map.bandwidth * np.log2(1.0 + np.minimum(s, rate_map.sinr_cap))
    return float(r) if r.ndim == 0 else r


def rate_inverse(rate_map, value):
    v = np.asarray(value, dtype=float)
    if np.any(v < 0):
        raise DomainError("rate must be non-negative")
    x = np.minimum(np.expm1(v / rate_map.bandwidth * math.log(2.0)), rate_map.sinr_cap)
    return float(x) if x.ndim == 0 else x


def cell_link_budgets(layout, positions, serving_cell, tx_power, noise, shadowing_db):
    """LinkBudgets for users at `positions` served by `serving_cell`.

    `shadowing_db` has shape (P, n_cells); every other site interferes.
    """
    d = layout.distances(positions)
    gains = large_scale_gain(d, shadowing_db)
    gains = np.atleast_2d(gains)
    links = []
    for g in gains:
        interf = tx_power * np.delete(g, serving_cell)
        links.append(LinkBudget(tx_power, float(g[serving_cell]), tuple(interf), noise))
    return links


def drop_links(layout, users_per_cell, tx_power, noise, rng, shadowing_sigma_db=8.0, min_distance=35.0):
    """One drop: per cell, `users_per_cell` users with independent shadowing per (user, site)."""
    cells = []
    for c in range(layout.n_cells):
        pos = drop_users(layout, c, users_per_cell, rng, min_distance)
        shadow = rng.normal(0.0, shadowing_sigma_db, size=(users_per_cell, layout.n_cells))
        cells.append(cell_link_budgets(layout, pos, c, tx_power, noise, shadow))
    return cells
