"""Sweeps over load and cell population, CSV error tables, and the estimator self-check.

Every seed is one drop (user positions and shadowing) shared by all sweep
points of that seed, so points are compared on identical geometry.  The
simulator stream is keyed by (seed, sweep point) and never by task order,
which keeps outputs byte-identical whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from pfsburst import __version__
from pfsburst import estimators as est
from pfsburst.config import ExperimentConfig
from pfsburst.errors import ConvergenceError
from pfsburst.radio import RateMap, dbm_to_watt, drop_links, hex_layout
from pfsburst.simulator import Scenario, run
from pfsburst.sinr_model import RateStats, SinrModel, integrate_sinr, sinr_pdf

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ESTIMATORS = ("rr", "ga", "mia", "ha")

DETAIL_COLUMNS = (
    ["schema", "sweep", "load", "users_per_cell", "seed", "cell", "user",
     "sim_rate_bps", "sim_activity_rate_bps", "active_share", "scheduled_share"]
    + [f"{e}_rate_bps" for e in ESTIMATORS]
    + [f"err_{e}" for e in ESTIMATORS]
    + [f"err_{e}_activity" for e in ESTIMATORS]
)

SUMMARY_COLUMNS = (
    ["schema", "sweep", "load", "users_per_cell", "n_seeds", "n_users", "n_excluded", "measured_duty_cycle"]
    + [f"{e}_{stat}" for e in ESTIMATORS
       for stat in ("signed_mean", "mean_abs", "p5", "p95", "cell_mean_abs", "activity_mean_abs")]
)


# -- scenario construction ------------------------------------------------------


def drop_seed(seed, users):
    return np.random.SeedSequence(seed, spawn_key=(0, int(users)))


def sim_seed(seed, users, load):
    return np.random.SeedSequence(seed, spawn_key=(1, int(users), int(round(load * 1_000_000))))


def build_drop(cfg: ExperimentConfig, seed, users=None):
    """Per-cell LinkBudget lists for one drop."""
    t = cfg.tree
    users = cfg.users_per_cell if users is None else users
    layout = hex_layout(t["layout"]["rings"], t["layout"]["isd_m"], t["layout"]["wraparound"])
    rng = np.random.default_rng(drop_seed(seed, users))
    cells = drop_links(layout, users, float(dbm_to_watt(t["tx_power_dbm"])), cfg.noise_watt, rng,
                       shadowing_sigma_db=t["shadowing_sigma_db"], min_distance=t["min_distance_m"])
    return layout, cells


def estimate_drop(cells, rate_map, loads):
    """EstimateReports per load and per cell; the saturated MIA solve is done once per cell."""
    base = [est.CellUserSet.from_links(c, 1.0, rate_map) for c in cells]
    return {load: [est.estimate(s.with_load(load)) for s in base] for load in loads}


def _cat(reports, name):
    return np.concatenate([getattr(r, name) for r in reports])


def _rel(estimate, simulated):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(simulated > 0, (estimate - simulated) / simulated, np.nan)


def evaluate_point(cfg, layout, cells, estimates, seed, users, load, sweep):
    """Simulate one (seed, sweep point) and return detail rows."""
    scenario = Scenario(cells, cfg.rate_map, cfg.traffic_for(load), layout)
    sim = run(scenario, cfg.scheduler, cfg.horizon_ttis, sim_seed(seed, users, load), cfg.warmup_ttis,
              cfg.stationary_start)
    sim_rate = sim.rate
    act_rate = sim.activity_scaled_rate()
    cols = {e: _cat(estimates, f"{e}_rate") for e in ESTIMATORS}
    err = {e: _rel(cols[e], sim_rate) for e in ESTIMATORS}
    err_act = {e: _rel(cols[e], act_rate) for e in ESTIMATORS}
    rows = []
    for i in range(sim_rate.size):
        row = {"schema": SCHEMA_VERSION, "sweep": sweep, "load": float(load), "users_per_cell": int(users),
               "seed": int(seed), "cell": int(sim.cell[i]), "user": int(sim.user[i]),
               "sim_rate_bps": float(sim_rate[i]), "sim_activity_rate_bps": float(act_rate[i]),
               "active_share": float(sim.active_share[i]), "scheduled_share": float(sim.scheduled_share[i])}
        for e in ESTIMATORS:
            row[f"{e}_rate_bps"] = float(cols[e][i])
        for e in ESTIMATORS:
            row[f"err_{e}"] = float(err[e][i])
        for e in ESTIMATORS:
            row[f"err_{e}_activity"] = float(err_act[e][i])
        rows.append(row)
    return rows


def _seed_task(tree, seed, users, loads, sweep):
    cfg = ExperimentConfig(tree)
    layout, cells = build_drop(cfg, seed, users)
    estimates = estimate_drop(cells, cfg.rate_map, loads)
    out = []
    for load in loads:
        out.extend(evaluate_point(cfg, layout, cells, estimates[load], seed, users, load, sweep))
    return out


# -- aggregation ------------------------------------------------------------------


def summarize(rows):
    """Summary statistics for the detail rows of a single sweep point."""
    first = rows[0]
    seeds = sorted({r["seed"] for r in rows})
    sim = np.array([r["sim_rate_bps"] for r in rows])
    excluded = ~(sim > 0)
    out = {"schema": SCHEMA_VERSION, "sweep": first["sweep"], "load": first["load"],
           "users_per_cell": first["users_per_cell"], "n_seeds": len(seeds), "n_users": len(rows),
           "n_excluded": int(excluded.sum()),
           "measured_duty_cycle": float(np.mean([r["active_share"] for r in rows]))}
    for e in ESTIMATORS:
        err = np.array([r[f"err_{e}"] for r in rows])[~excluded]
        act = np.array([r[f"err_{e}_activity"] for r in rows])
        act = act[np.isfinite(act)]
        # cell-aggregate error: summed estimate against summed simulated rate per (seed, cell)
        groups = {}
        for r in rows:
            g = groups.setdefault((r["seed"], r["cell"]), [0.0, 0.0])
            g[0] += r[f"{e}_rate_bps"]
            g[1] += r["sim_rate_bps"]
        cell_err = np.array([(a - b) / b for a, b in groups.values() if b > 0])
        nan = math.nan
        out[f"{e}_signed_mean"] = float(err.mean()) if err.size else nan
        out[f"{e}_mean_abs"] = float(np.abs(err).mean()) if err.size else nan
        out[f"{e}_p5"] = float(np.percentile(err, 5)) if err.size else nan
        out[f"{e}_p95"] = float(np.percentile(err, 95)) if err.size else nan
        out[f"{e}_cell_mean_abs"] = float(np.abs(cell_err).mean()) if cell_err.size else nan
        out[f"{e}_activity_mean_abs"] = float(np.abs(act).mean()) if act.size else nan
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


_INT_COLUMNS = {"schema", "users_per_cell", "seed", "cell", "user", "n_seeds", "n_users", "n_excluded"}


def read_csv(path):
    """Rows of a CSV written by `write_csv`, with numeric columns converted back."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k == "sweep":
                continue
            r[k] = int(v) if k in _INT_COLUMNS else float(v)
    return rows


# -- sweeps -----------------------------------------------------------------------


@dataclass
class SweepResult:
    out_dir: Path
    summary: list
    detail_files: list
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


def _point_key(row, sweep):
    return row["load"] if sweep == "load" else row["users_per_cell"]


def _detail_name(sweep, key):
    return f"detail_load_{key:g}.csv" if sweep == "load" else f"detail_users_{key}.csv"


def _execute(cfg, tasks, sweep, out_dir):
    """Run (seed, users, loads) tasks, then write detail, summary and sidecar files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = int(cfg.tree["workers"])
    results, failures = {}, []

    def record(task, fut_or_rows):
        try:
            results[task[:2]] = fut_or_rows() if callable(fut_or_rows) else fut_or_rows
        except Exception as exc:  # noqa: BLE001 - reported per task, run continues
            log.error("seed %s, users %s failed: %s", task[0], task[1], exc)
            failures.append({"seed": task[0], "users_per_cell": task[1], "error": f"{type(exc).__name__}: {exc}"})

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [(t, pool.submit(_seed_task, cfg.tree, *t, sweep)) for t in tasks]
            for t, f in futs:
                record(t, f.result)
    else:
        for t in tasks:
            log.info("seed %s, users %s", t[0], t[1])
            record(t, lambda t=t: _seed_task(cfg.tree, *t, sweep))

    points = {}
    for key in sorted(results):
        for row in results[key]:
            points.setdefault(_point_key(row, sweep), []).append(row)
    summary, files = [], []
    for key in sorted(points):
        rows = sorted(points[key], key=lambda r: (r["seed"], r["cell"], r["user"]))
        name = _detail_name(sweep, key)
        write_csv(out_dir / name, DETAIL_COLUMNS, rows)
        files.append(name)
        summary.append(summarize(rows))
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary)
    sidecar = {"schema": SCHEMA_VERSION, "package_version": __version__, "sweep": sweep,
               "status": "partial" if failures else "complete", "failures": failures,
               "config": cfg.tree}
    (out_dir / "effective_config.yaml").write_text(yaml.safe_dump(sidecar, sort_keys=False), encoding="utf-8")
    if failures:
        (out_dir / "PARTIAL").write_text("".join(f"{f}\n" for f in failures), encoding="utf-8")
    elif (out_dir / "PARTIAL").exists():
        (out_dir / "PARTIAL").unlink()
    return SweepResult(out_dir, summary, files, failures)


def run_sweep(cfg: ExperimentConfig, out_dir=None):
    """Load sweep: every configured load on every seed's drop."""
    out_dir = Path(out_dir or cfg.tree["out"]) / "load_sweep"
    tasks = [(s, cfg.users_per_cell, tuple(cfg.loads)) for s in cfg.seeds]
    return _execute(cfg, tasks, "load", out_dir)


def run_user_sweep(cfg: ExperimentConfig, out_dir=None):
    """Population sweep at the fixed `user_sweep.load`."""
    out_dir = Path(out_dir or cfg.tree["out"]) / "user_sweep"
    us = cfg.tree["user_sweep"]
    tasks = [(s, int(n), (float(us["load"]),)) for n in us["users_per_cell"] for s in cfg.seeds]
    return _execute(cfg, tasks, "users", out_dir)


# -- estimator self-check ---------------------------------------------------------


@dataclass
class Check:
    name: str
    status: str  # "pass", "fail" or "tolerance-miss"
    detail: str


def _synthetic_cell(rng, n, load):
    users = []
    for _ in range(n):
        mean = rng.uniform(0.2, 5.0)
        users.append(est.UserModel(SinrModel(1.0), RateStats(mean, rng.uniform(0.0, 1.5) * mean)))
    return est.CellUserSet(users, load)


def _check_order_stats():
    L = est.ORDER_STATS
    e2 = abs(L[2] - 1 / math.sqrt(math.pi))
    e3 = abs(L[3] - 1.5 / math.sqrt(math.pi))
    ok = L[1] == 0.0 and e2 <= 1e-6 and e3 <= 1e-6
    return ok, f"L(1)={L[1]!r} |L(2)-1/sqrt(pi)|={e2:.2e} |L(3)-1.5/sqrt(pi)|={e3:.2e}"


def _check_mixture():
    worst = max(abs(est.l_mixture(n, 1.0) - est.ORDER_STATS[n]) for n in range(1, 65))
    grid = np.linspace(0.01, 1.0, 100)
    mono = all(np.all(np.diff([est.l_mixture(n, r) for r in grid]) >= -1e-14) for n in (2, 5, 12, 30, 64))
    nonneg = all(est.l_mixture(n, r) >= 0 for n in (1, 2, 8, 64) for r in grid)
    return worst <= 1e-12 and mono and nonneg, f"max|l(N,1)-L(N)|={worst:.2e} monotone={mono} nonnegative={nonneg}"


def _check_equivalence(v, rng):
    worst = 0.0
    perturb = float(v["sigma_perturbation"])
    for _ in range(int(v["instances"])):
        n = int(rng.integers(1, int(v["max_users"]) + 1))
        load = float(rng.choice(np.round(np.arange(0.1, 1.01, 0.1), 1)))
        cell = _synthetic_cell(rng, n, load)
        u = int(rng.integers(n))
        st = cell.stats(u)
        ratio = st.std_rate * (1.0 + perturb) / st.mean_rate

        def gain(subset, ratio=ratio):
            return 1.0 + ratio * est.ORDER_STATS[len(subset)]

        exact = est.exact_burst_rate(u, cell, gain)
        closed = est.ga_rate(u, cell)
        worst = max(worst, abs(exact - closed) / abs(closed))
    return worst <= v["equivalence_rtol"], f"max relative difference {worst:.2e} over {v['instances']} instances"


def _check_ga_gain(rng):
    worst = min(est.ga_gain(0, _synthetic_cell(rng, int(rng.integers(1, 30)), float(rng.uniform(0.01, 1))))
                for _ in range(200))
    return worst >= 1.0, f"min ga_gain {worst!r}"


def _check_density(cells, tol):
    worst = 0.0
    for link in cells[0]:
        model = SinrModel.from_link(link)
        total = integrate_sinr(model, lambda x: 1.0, epsabs=tol, epsrel=tol)
        worst = max(worst, abs(total - 1.0))
        # the density itself must be finite and non-negative everywhere sampled
        if not np.all(sinr_pdf(model, np.logspace(-8, 8, 50)) >= 0):
            return False, "negative density"
    return worst <= 1e-8, f"max |integral - 1| = {worst:.2e}"


def _check_mia(cells, rate_map):
    cell = est.CellUserSet.from_links(cells[0], 1.0, rate_map)
    sol = est.solve_mia(cell)
    resid = float(np.max(np.abs(est.mia_residual(cell, sol.rates))))
    ok = resid < 1e-8 and sol.iterations < 500
    return ok, f"max relative residual {resid:.2e}, {sol.iterations} iterations ({sol.method})"


def _check_scaling(cells, rate_map):
    a = est.CellUserSet.from_links(cells[0], 1.0, rate_map)
    b = est.CellUserSet.from_links(cells[0], 1.0, RateMap(3.0 * rate_map.bandwidth, rate_map.sinr_cap))
    ra, rb = est.solve_mia(a).rates, est.solve_mia(b).rates
    dev = float(np.max(np.abs(rb / (3.0 * ra) - 1.0)))
    return dev <= 1e-8, f"max |R(3B)/(3R(B)) - 1| = {dev:.2e}"


def _check_ha_limits(cells, rate_map):
    base = est.CellUserSet.from_links(cells[0], 1.0, rate_map)
    full, low = base, base.with_load(1e-6)
    d1 = max(abs(est.ha_gain(u, full) - est.mia_gain(u, full)) for u in range(base.size))
    d0 = max(abs(est.ha_gain(u, low) / est.ga_gain(u, low) - 1.0) for u in range(base.size))
    floor = all(est.ha_gain(u, base.with_load(r)) >= min(1.0, est.mia_gain(u, base)) - 1e-12
                for u in range(base.size) for r in (0.1, 0.5, 0.9))
    ok = d1 <= 1e-12 and d0 <= 1e-4 and floor
    return ok, f"|ha-mia| at full load {d1:.2e}; relative |ha/ga-1| at load 1e-6 {d0:.2e}; lower bound held={floor}"


def validate_estimators(cfg: ExperimentConfig):
    """Run every estimator invariant; returns a list of Check records."""
    v = cfg.tree["validation"]
    rng = np.random.default_rng(int(v["seed"]))
    _, cells = build_drop(cfg, int(v["seed"]))
    suite = [
        ("order_statistics_closed_forms", _check_order_stats),
        ("mixture_limits_and_monotonicity", _check_mixture),
        ("subset_enumeration_equals_closed_form", lambda: _check_equivalence(v, rng)),
        ("ga_gain_at_least_one", lambda: _check_ga_gain(rng)),
        ("sinr_density_normalised", lambda: _check_density(cells, float(v["quad_tol"]))),
        ("mia_fixed_point_residual", lambda: _check_mia(cells, cfg.rate_map)),
        ("mia_bandwidth_equivariance", lambda: _check_scaling(cells, cfg.rate_map)),
        ("ha_limits", lambda: _check_ha_limits(cells, cfg.rate_map)),
    ]
    out = []
    for name, fn in suite:
        try:
            ok, detail = fn()
            out.append(Check(name, "pass" if ok else "fail", detail))
        except (ConvergenceError, ValueError) as exc:
            out.append(Check(name, "tolerance-miss", f"{type(exc).__name__}: {exc}"))
    return out
