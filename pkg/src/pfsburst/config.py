"""Experiment configuration: a YAML tree merged over embedded defaults."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from pfsburst.errors import ConfigError
from pfsburst.radio import RateMap, noise_power
from pfsburst.simulator import ColdStart, SchedulerConfig, SchedulerKind
from pfsburst.traffic import OnOffConfig

# 46 dBm macro transmit power spread over 50 resource blocks (10 MHz carrier).
_PER_RB_TX_DBM = round(46.0 - 10.0 * math.log10(50.0), 4)

DEFAULTS = {
    "layout": {"rings": 2, "isd_m": 500.0, "wraparound": True},
    "users_per_cell": 20,
    "shadowing_sigma_db": 8.0,
    "min_distance_m": 35.0,
    "tx_power_dbm": _PER_RB_TX_DBM,
    "noise_figure_db": 9.0,
    "rate_map": {"bandwidth_hz": 180e3, "sinr_cap": 1e6},
    "traffic": {"alpha": 1.5, "beta_s": 10.0, "lambda_off": None, "loads": [0.25, 0.5, 0.75],
                "start": "stationary"},
    "user_sweep": {"users_per_cell": [5, 10, 20, 30], "load": 0.5},
    "scheduler": {
        "kind": "proportional_fair",
        "pf_time_constant": 1000,
        "tti_s": 1e-3,
        "cold_start": "reset_per_session",
        "warmup_ttis": 5000,
    },
    "horizon_ttis": 1_005_000,
    "seeds": list(range(20)),
    "out": "results",
    "workers": 1,
    "validation": {
        "instances": 100,
        "max_users": 12,
        "equivalence_rtol": 1e-10,
        "quad_tol": 1e-10,
        "sigma_perturbation": 0.0,
        "seed": 0,
    },
}


def defaults_yaml():
    return yaml.safe_dump(DEFAULTS, sort_keys=False)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown field '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"field '{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _num(tree, path, kind=float, positive=True, allow_none=False):
    node = tree
    keys = path.split(".")
    for k in keys[:-1]:
        node = node[k]
    v = node[keys[-1]]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{path}' must be a number, got {v!r}")
    if kind is int and float(v) != int(v):
        raise ConfigError(f"field '{path}' must be an integer, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ConfigError(f"field '{path}' must be positive, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"field '{path}' must be finite")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    tree: dict

    @classmethod
    def from_mapping(cls, mapping=None):
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ConfigError("the configuration root must be a mapping")
        tree = _merge(DEFAULTS, mapping)
        cfg = cls(tree)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"cannot parse configuration{where}: {getattr(exc, 'problem', exc)}") from exc
        return cls.from_mapping(data)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read configuration: {exc}") from exc
        return cls.from_yaml(text)

    def replace(self, **changes):
        tree = copy.deepcopy(self.tree)
        tree.update(changes)
        return ExperimentConfig.from_mapping(tree)

    def validate(self):
        t = self.tree
        for p in ("layout.isd_m", "tx_power_dbm", "noise_figure_db", "rate_map.bandwidth_hz",
                  "rate_map.sinr_cap", "traffic.alpha", "traffic.beta_s", "scheduler.tti_s",
                  "shadowing_sigma_db", "min_distance_m"):
            # transmit power in dBm and the noise figure may in principle be <= 0
            _num(t, p, positive=p not in ("tx_power_dbm", "noise_figure_db", "shadowing_sigma_db"))
        if t["shadowing_sigma_db"] < 0:
            raise ConfigError("field 'shadowing_sigma_db' must be non-negative")
        _num(t, "layout.rings", int, positive=False)
        if t["layout"]["rings"] < 0:
            raise ConfigError("field 'layout.rings' must be non-negative")
        if not isinstance(t["layout"]["wraparound"], bool):
            raise ConfigError("field 'layout.wraparound' must be true or false")
        _num(t, "users_per_cell", int)
        _num(t, "horizon_ttis", int)
        _num(t, "workers", int)
        _num(t, "scheduler.pf_time_constant")
        _num(t, "scheduler.warmup_ttis", int, positive=False)
        if t["traffic"]["alpha"] <= 1:
            raise ConfigError("field 'traffic.alpha' must exceed 1 for a finite mean session length")
        lam = _num(t, "traffic.lambda_off", allow_none=True)
        if lam is None:
            loads = t["traffic"]["loads"]
            if not isinstance(loads, list) or not loads:
                raise ConfigError("field 'traffic.loads' must be a non-empty list")
            for i, rho in enumerate(loads):
                if isinstance(rho, bool) or not isinstance(rho, (int, float)) or not 0 < rho <= 1:
                    raise ConfigError(f"field 'traffic.loads[{i}]' must lie in (0, 1], got {rho!r}")
        if t["traffic"]["start"] not in ("stationary", "cold_off"):
            raise ConfigError("field 'traffic.start' must be 'stationary' or 'cold_off'")
        us = t["user_sweep"]
        if not isinstance(us["users_per_cell"], list) or not us["users_per_cell"]:
            raise ConfigError("field 'user_sweep.users_per_cell' must be a non-empty list")
        for i, n in enumerate(us["users_per_cell"]):
            if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                raise ConfigError(f"field 'user_sweep.users_per_cell[{i}]' must be a positive integer")
        if isinstance(us["load"], bool) or not isinstance(us["load"], (int, float)) or not 0 < us["load"] <= 1:
            raise ConfigError("field 'user_sweep.load' must lie in (0, 1]")
        seeds = t["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("field 'seeds' must be a non-empty list")
        for i, s in enumerate(seeds):
            if isinstance(s, bool) or not isinstance(s, int) or s < 0:
                raise ConfigError(f"field 'seeds[{i}]' must be a non-negative integer")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("field 'seeds' contains duplicates")
        if not isinstance(t["out"], str) or not t["out"]:
            raise ConfigError("field 'out' must be a path string")
        v = t["validation"]
        _num(t, "validation.instances", int)
        _num(t, "validation.max_users", int)
        _num(t, "validation.equivalence_rtol")
        _num(t, "validation.quad_tol")
        _num(t, "validation.sigma_perturbation", positive=False)
        _num(t, "validation.seed", int, positive=False)
        if v["max_users"] > 20:
            raise ConfigError("field 'validation.max_users' must not exceed 20 (subset enumeration)")
        try:
            self.scheduler
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"field 'scheduler': {exc}") from exc
        if self.horizon_ttis <= self.warmup_ttis:
            raise ConfigError("field 'horizon_ttis' must exceed 'scheduler.warmup_ttis'")

    # -- typed views ---------------------------------------------------------

    @property
    def rate_map(self):
        r = self.tree["rate_map"]
        return RateMap(float(r["bandwidth_hz"]), float(r["sinr_cap"]))

    @property
    def noise_watt(self):
        return noise_power(float(self.tree["rate_map"]["bandwidth_hz"]), float(self.tree["noise_figure_db"]))

    @property
    def scheduler(self):
        s = self.tree["scheduler"]
        return SchedulerConfig(SchedulerKind(s["kind"]), float(s["pf_time_constant"]), float(s["tti_s"]),
                               ColdStart(s["cold_start"]))

    @property
    def warmup_ttis(self):
        return int(self.tree["scheduler"]["warmup_ttis"])

    @property
    def horizon_ttis(self):
        return int(self.tree["horizon_ttis"])

    @property
    def seeds(self):
        return list(self.tree["seeds"])

    @property
    def users_per_cell(self):
        return int(self.tree["users_per_cell"])

    @property
    def loads(self):
        tr = self.tree["traffic"]
        if tr["lambda_off"] is not None:
            return [OnOffConfig(tr["alpha"], tr["beta_s"], tr["lambda_off"]).rho]
        return [float(x) for x in tr["loads"]]

    @property
    def stationary_start(self):
        return self.tree["traffic"]["start"] == "stationary"

    def traffic_for(self, load):
        """OnOffConfig reaching `load`, or None for saturated traffic."""
        if load >= 1.0:
            return None
        tr = self.tree["traffic"]
        if tr["lambda_off"] is not None:
            return OnOffConfig(tr["alpha"], tr["beta_s"], tr["lambda_off"])
        return OnOffConfig.for_load(tr["alpha"], tr["beta_s"], load)

    def to_yaml(self):
        return yaml.safe_dump(self.tree, sort_keys=False)
