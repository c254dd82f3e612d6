"""Seeded experiment sweeps with declarative configs and CSV/JSON outputs.

A config file is an INI file whose values are JSON (bare words are read as
strings)::

    [experiment]
    id = t1-ais-gap
    seeds = [0, 1, 2, 3, 4]
    output = results/t1
    n_eval = 20000

    [env]
    p_handoff = 0.55

    [learner]
    budget = 1000000
    schedule = visit

    [sweep]
    axis = rho
    grid = [1.0, 0.9, 0.8]

    [options]
    gap_epochs = 1000000

Every (axis value, seed) cell is independent. Cells run on a process pool
whose size comes from the ``ICSMDP_WORKERS`` environment variable (default
1) and are merged in (axis value, seed) order, so outputs do not depend on
scheduling.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .ais import gaps_from_samples, identity_map, make_retention_map
from .core import ConfigError, make_streams
from .diagnostics import estimate_chain_stats, evaluate_policy, pearson, spearman
from .envs import build_cpu, build_routing, build_synthetic, greedy_route
from .estimators import DivergenceError
from .learner import LearnerConfig, greedy_tables, run_episode, train
from .oracle import exact_latent_smdp, lipschitz_constant, smdp_value_iteration
from .rollout import UniformBehavior, sample_epochs

EXPERIMENTS = ("t1-ais-gap", "t2-sample-budget", "t2-mixing", "t2-retention", "routing",
               "cpu", "oracle-check")
WORKERS_ENV = "ICSMDP_WORKERS"
_SECTIONS = ("experiment", "env", "learner", "sweep", "options")


@dataclass
class ExperimentConfig:
    experiment: str
    axis: str
    grid: list
    seeds: list[int]
    output: str = "results"
    n_eval: int = 2000
    env: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.grid:
            raise ConfigError("sweep grid must not be empty")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if self.n_eval < 1:
            raise ConfigError("n_eval must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Identifies the config contents (not its output path) and the code version."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True) + __version__
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case
    cp.read_string(text)
    unknown = set(cp.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sec = {name: {k: _value(v) for k, v in cp[name].items()} if cp.has_section(name) else {}
           for name in _SECTIONS}
    exp, sweep = sec["experiment"], sec["sweep"]
    try:
        cfg = ExperimentConfig(
            experiment=exp["id"], axis=sweep["axis"], grid=list(sweep["grid"]),
            seeds=[int(s) for s in exp["seeds"]], output=str(exp.get("output", "results")),
            n_eval=int(exp.get("n_eval", 2000)), env=sec["env"], learner=sec["learner"],
            options=sec["options"])
    except KeyError as e:
        raise ConfigError(f"missing config key {e}") from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# -- records ---------------------------------------------------------------------

@dataclass
class RunRecord:
    experiment: str
    axis: str
    value: float | str
    seed: int
    error: float = math.nan
    eval_return: float = math.nan
    gap_v: float = math.nan
    alpha_hat: float = math.nan
    t_mix: float = math.nan
    accuracy: float = math.nan
    optimal_fraction: float = math.nan
    epochs: int = 0
    wall_clock: float = 0.0
    flagged: bool = False
    config_hash: str = ""
    extra: dict = field(default_factory=dict)


COLUMNS = tuple(f.name for f in fields(RunRecord))
TIMING_COLUMNS = ("wall_clock",)


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    if isinstance(v, float):
        return repr(v)
    return v


def write_records(path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_cell(getattr(r, c)) for c in COLUMNS])


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for f in fields(RunRecord):
                raw = row[f.name]
                if f.name in ("experiment", "axis", "config_hash"):
                    kw[f.name] = raw
                elif f.name == "value":
                    kw[f.name] = _value(raw)
                elif f.name in ("seed", "epochs"):
                    kw[f.name] = int(raw)
                elif f.name == "flagged":
                    kw[f.name] = bool(int(raw))
                elif f.name == "extra":
                    kw[f.name] = json.loads(raw) if raw else {}
                else:
                    kw[f.name] = float(raw)
            out.append(RunRecord(**kw))
    return out


# -- shared pieces ---------------------------------------------------------------

def _learner_config(cfg: ExperimentConfig, env, **overrides) -> LearnerConfig:
    params = {"gamma": env.gamma, **cfg.learner, **overrides}
    return LearnerConfig(**params)


def _synthetic(cfg: ExperimentConfig, **overrides):
    return build_synthetic(**{**cfg.env, **overrides})


@lru_cache(maxsize=32)
def _oracle(spec_json: str, tau_max: int):
    env = build_synthetic(**json.loads(spec_json))
    latent = exact_latent_smdp(env, tau_max=tau_max)
    q, v, _ = smdp_value_iteration(latent, tol=1e-12)
    return env, latent, q, v


@lru_cache(maxsize=4)
def _gap_samples(spec_json: str, seed: int, n_epochs: int):
    env = build_synthetic(**json.loads(spec_json))
    return sample_epochs(env, UniformBehavior(), n_epochs, np.random.default_rng(seed))


def gap_samples(env, seed: int, n_epochs: int):
    """Uniform-behavior epochs for interface-gap estimates (cached per process)."""
    return _gap_samples(json.dumps(env.spec.to_dict(), sort_keys=True), seed, n_epochs)


def oracle_for(env, tau_max: int | None = None):
    """Exact latent SMDP and its optimal values for a synthetic environment (cached)."""
    spec = json.dumps(env.spec.to_dict(), sort_keys=True)
    return _oracle(spec, tau_max or env.horizon)


def oracle_error(learners, maps, latent, q_star: np.ndarray) -> float:
    """``sum mu(i, m, c) (Q_i(phi_i(m), c) - Q*_lat(i, m, c))**2`` over valid cells.

    ``mu`` is the latent occupancy of ``(i, m)`` times a uniform choice over
    the valid successors.
    """
    N, M = latent.n_agents, latent.n_per_agent
    tables = greedy_tables(learners)
    err = 0.0
    for i in range(N):
        for m in range(M):
            row = i * M + m
            cols = np.flatnonzero(latent.valid[row])
            if cols.size == 0:
                continue
            learned = tables[i][maps[i](m, 0), cols]
            w = latent.occupancy[i, m] / cols.size
            err += w * float(np.sum((learned - q_star[row, cols]) ** 2))
    return err


def _max_error(learners, maps, latent, q_star) -> float:
    tables = greedy_tables(learners)
    N, M = latent.n_agents, latent.n_per_agent
    worst = 0.0
    for i in range(N):
        for m in range(M):
            row = i * M + m
            cols = np.flatnonzero(latent.valid[row])
            if cols.size:
                d = tables[i][maps[i](m, 0), cols] - q_star[row, cols]
                worst = max(worst, float(np.abs(d).max()))
    return worst


def _finite(learners) -> bool:
    return all(np.all(np.isfinite(t)) for t in greedy_tables(learners))


# -- T1: interface gap against value gap ----------------------------------------

def _t1_cell(cfg: ExperimentConfig, seed: int) -> list[RunRecord]:
    """All retention levels for one seed; the value gap is taken against the
    highest retention in the grid."""
    env = _synthetic(cfg, kernel_seed=seed, reward_seed=seed)
    gap_epochs = int(cfg.options.get("gap_epochs", 200_000))
    samples = gap_samples(env, seed, gap_epochs)
    rows, returns = [], {}
    for rho in sorted(cfg.grid, reverse=True):
        t0 = time.perf_counter()
        maps = [make_retention_map(env.config.card_interface, rho, i)
                for i in range(env.n_agents)]
        lc = _learner_config(cfg, env, seed=seed)
        flagged = False
        try:
            learners = train(env, maps, lc)
            flagged = not _finite(learners)
        except DivergenceError:
            flagged = True
        J = math.nan
        if not flagged:
            J, _ = evaluate_policy(env, maps, learners, lc, cfg.n_eval,
                                   make_streams(10 ** 6 + seed))
        returns[rho] = J
        gaps = gaps_from_samples(samples, maps, env.gamma, env.r_max, env.horizon)
        rows.append(RunRecord(
            cfg.experiment, "rho", rho, seed, eval_return=J, alpha_hat=gaps.alpha_hat,
            epochs=lc.budget, wall_clock=time.perf_counter() - t0, flagged=flagged,
            extra={"eps_phi_hat": gaps.eps_phi_hat, "delta_phi_hat": gaps.delta_phi_hat,
                   "alpha_mean": gaps.alpha_mean, "gamma_bar_hat": gaps.gamma_bar_hat}))
    base = returns[max(cfg.grid)]
    for r in rows:
        r.gap_v = base - r.eval_return
    return rows


def _mean_by_value(records: Sequence[RunRecord], attr: str) -> tuple[list, list]:
    by: dict = {}
    for r in records:
        if not r.flagged:
            by.setdefault(r.value, []).append(getattr(r, attr))
    xs = sorted(by, key=lambda v: (isinstance(v, str), v))
    return xs, [float(np.mean(by[x])) for x in xs]


def _safe(fn, *args) -> float | None:
    try:
        return fn(*args)
    except ValueError:
        return None


def summarize_t1(records: Sequence[RunRecord]) -> dict:
    xs, gap = _mean_by_value(records, "gap_v")
    _, alpha = _mean_by_value(records, "alpha_hat")
    alpha_mean = [float(np.mean([r.extra.get("alpha_mean", math.nan) for r in records
                                 if r.value == x and not r.flagged])) for x in xs]
    return {"rho": xs, "gap_v": gap, "alpha_hat": alpha, "alpha_mean": alpha_mean,
            "pearson_gap_alpha": _safe(pearson, gap, alpha),
            "pearson_gap_alpha_mean": _safe(pearson, gap, alpha_mean),
            "spearman_rho_alpha": _safe(spearman, xs, alpha)}


# -- T2: budget, mixing and retention axes --------------------------------------

def _t2_train_error(cfg: ExperimentConfig, env, maps, seed: int, budget: int):
    latent, q = oracle_for(env, cfg.options.get("tau_max"))[1:3]
    lc = _learner_config(cfg, env, seed=seed, budget=budget)
    try:
        learners = train(env, maps, lc)
    except DivergenceError:
        return math.nan, True, latent, q
    if not _finite(learners):
        return math.nan, True, latent, q
    return oracle_error(learners, maps, latent, q), False, latent, q


def _t2_budget_cell(cfg: ExperimentConfig, T, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = _synthetic(cfg)
    maps = [identity_map(env.config.card_interface, i) for i in range(env.n_agents)]
    err, flagged, _, _ = _t2_train_error(cfg, env, maps, seed, int(T))
    return [RunRecord(cfg.experiment, "budget", int(T), seed, error=err, epochs=int(T),
                      wall_clock=time.perf_counter() - t0, flagged=flagged)]


def _t2_mixing_cell(cfg: ExperimentConfig, p, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = _synthetic(cfg, p_handoff=float(p))
    maps = [identity_map(env.config.card_interface, i) for i in range(env.n_agents)]
    budget = int(cfg.learner.get("budget", 1000))
    err, flagged, _, _ = _t2_train_error(cfg, env, maps, seed, budget)
    chain = estimate_chain_stats(env, maps, n_epochs=int(cfg.options.get("chain_steps", 200_000)),
                                 eps=float(cfg.options.get("mix_eps", 0.25)),
                                 rng=np.random.default_rng(seed), time_scale="step")
    return [RunRecord(cfg.experiment, "p_handoff", float(p), seed, error=err,
                      t_mix=chain.t_mix, epochs=budget, wall_clock=time.perf_counter() - t0,
                      flagged=flagged, extra={"mu_min": chain.mu_min})]


def _t2_retention_cell(cfg: ExperimentConfig, rho, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = _synthetic(cfg)
    maps = [make_retention_map(env.config.card_interface, float(rho), i)
            for i in range(env.n_agents)]
    budget = int(cfg.learner.get("budget", 1000))
    err, flagged, latent, q = _t2_train_error(cfg, env, maps, seed, budget)
    v = np.max(np.where(latent.valid, q, -np.inf), axis=1)
    samples = gap_samples(env, seed, int(cfg.options.get("gap_epochs", 100_000)))
    gaps = gaps_from_samples(samples, maps, env.gamma, env.r_max, env.horizon,
                             lipschitz_constant(v))
    return [RunRecord(cfg.experiment, "rho", float(rho), seed, error=err,
                      alpha_hat=gaps.alpha_hat, epochs=budget,
                      wall_clock=time.perf_counter() - t0, flagged=flagged,
                      extra={"eps_phi_hat": gaps.eps_phi_hat,
                             "delta_phi_hat": gaps.delta_phi_hat})]


def _loglog_slope(xs, ys) -> float | None:
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2:
        return None
    a = np.array(pts)
    return float(np.polyfit(a[:, 0], a[:, 1], 1)[0])


def summarize_t2(records: Sequence[RunRecord], options: dict | None = None) -> dict:
    """Per-axis shape statistics.

    On the budget axis, ``options["floor_budget"]`` names a grid value whose
    error serves as the asymptotic floor; it is left out of the slope and
    the first/last comparison.
    """
    options = options or {}
    axis = records[0].axis if records else ""
    xs, err = _mean_by_value(records, "error")
    out = {"axis": axis, "values": xs, "error": err}
    if axis == "budget":
        floor_at = options.get("floor_budget")
        floor = float(options.get("floor", 0.0))
        if floor_at in xs:
            floor = err[xs.index(floor_at)]
            keep = [k for k, x in enumerate(xs) if x != floor_at]
            xs, err = [xs[k] for k in keep], [err[k] for k in keep]
        out["floor"] = floor
        out["loglog_slope"] = _loglog_slope(xs, [e - floor for e in err])
        out["first_exceeds_last"] = bool(err[0] > err[-1]) if len(err) > 1 else None
    elif axis == "p_handoff":
        _, tmix = _mean_by_value(records, "t_mix")
        out["t_mix"] = tmix
        out["spearman_p_tmix"] = _safe(spearman, xs, tmix)
        out["spearman_tmix_error"] = _safe(spearman, tmix, err)
    elif axis == "rho":
        _, alpha = _mean_by_value(records, "alpha_hat")
        out["alpha_hat"] = alpha
        out["spearman_floor_alpha"] = _safe(spearman, err, alpha)
        out["floor_low_exceeds_high"] = bool(err[0] > err[-1]) if len(err) > 1 else None
    return out


# -- routing ---------------------------------------------------------------------

def routing_accuracy(env, tables, pairs) -> tuple[float, float]:
    """Delivery rate and, among deliveries, the shortest-path fraction."""
    dist = env.all_distances()
    delivered = shortest = 0
    for s, d in pairs:
        path = greedy_route(env, tables, s, d)
        if path is not None:
            delivered += 1
            shortest += int(len(path) - 1 == dist[s, d])
    return delivered / len(pairs), shortest / max(delivered, 1)


def _routing_cell(cfg: ExperimentConfig, family, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = build_routing(**{**cfg.env, "family": family, "seed": seed})
    lc = _learner_config(cfg, env, seed=seed)
    learners = train(env, env.maps, lc)
    N = env.spec.n_agents
    n_pairs = cfg.options.get("n_pairs")
    pairs = [(s, d) for s in range(N) for d in range(N) if s != d]
    if n_pairs is not None and n_pairs < len(pairs):
        rng = np.random.default_rng(seed)
        pairs = [pairs[k] for k in sorted(rng.choice(len(pairs), int(n_pairs), replace=False))]
    acc, opt = routing_accuracy(env, greedy_tables(learners), pairs)
    return [RunRecord(cfg.experiment, "family", family, seed, accuracy=acc,
                      optimal_fraction=opt, epochs=lc.budget,
                      wall_clock=time.perf_counter() - t0, flagged=not _finite(learners),
                      extra={"graph_attempt": env.graph_attempt, "n_pairs": len(pairs)})]


# -- CPU ---------------------------------------------------------------------

def cpu_accuracy(env, learners, config: LearnerConfig, n_eval: int,
                 rng: np.random.Generator) -> float:
    """Fraction of greedy episodes that STOP with the output equal to the target."""
    ok = 0
    for _ in range(n_eval):
        res = run_episode(env, env.maps, learners, config, rng, epsilon=0.0, train=False)
        ok += int(res.terminated_by_stop and res.ret > 0.5)
    return ok / n_eval


def _cpu_cell(cfg: ExperimentConfig, fraction, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = build_cpu(**{**cfg.env, "train_fraction": float(fraction), "split": "train",
                       "seed": seed})
    lc = _learner_config(cfg, env, seed=seed, adaptable=True)
    learners = train(env, env.maps, lc)
    split = cfg.options.get("eval_split", "heldout")
    if split == "heldout" and env.spec.cutoff >= env.spec.n_values:
        split = "train"  # the whole range was used for training
    ev = build_cpu(**{**cfg.env, "train_fraction": float(fraction), "split": split,
                      "seed": seed})
    acc = cpu_accuracy(ev, learners, lc, cfg.n_eval, np.random.default_rng(10 ** 6 + seed))
    train_acc = cpu_accuracy(env, learners, lc, cfg.n_eval, np.random.default_rng(seed))
    return [RunRecord(cfg.experiment, "train_fraction", float(fraction), seed, accuracy=acc,
                      epochs=lc.budget, wall_clock=time.perf_counter() - t0,
                      flagged=not _finite(learners),
                      extra={"eval_split": split, "train_accuracy": train_acc})]


# -- oracle check ----------------------------------------------------------------

def oracle_instance(seed: int, options: dict | None = None):
    """Small random synthetic instance with a directly observed interface.

    The latent part has a single state, so the interface is the whole state
    and the latent SMDP is an exact model of what the learner sees.
    """
    o = options or {}
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, int(o.get("max_agents", 3)) + 1))
    M = int(rng.integers(2, int(o.get("max_interface", 10)) + 1))
    return build_synthetic(n_agents=N, card_latent=1, card_interface=M,
                           horizon=int(o.get("horizon", 400)),
                           p_handoff=float(o.get("p_handoff", 0.55)),
                           gamma=float(o.get("gamma", 0.3)),
                           emission_fidelity=float(o.get("emission_fidelity", 0.3)),
                           kernel_seed=seed, reward_seed=seed)


def _oracle_cell(cfg: ExperimentConfig, instance, seed: int) -> list[RunRecord]:
    t0 = time.perf_counter()
    env = oracle_instance(int(instance), cfg.options)
    N, M = env.n_agents, env.config.card_interface
    _, latent, q, _ = oracle_for(env, int(cfg.options.get("tau_max", 40)))
    maps = [identity_map(M, i) for i in range(N)]
    per = float(cfg.options.get("episodes_per_cell", 150_000))
    budget = int(per * M / N)
    lc = _learner_config(cfg, env, seed=seed, budget=budget)
    learners = train(env, maps, lc)
    err = _max_error(learners, maps, latent, q)
    tol = float(cfg.options.get("tolerance", 1e-2))
    return [RunRecord(cfg.experiment, "instance", int(instance), seed, error=err,
                      epochs=budget, wall_clock=time.perf_counter() - t0,
                      flagged=not (err <= tol), extra={"n_agents": N, "card_interface": M})]


def summarize_oracle(records: Sequence[RunRecord], tol: float = 1e-2) -> dict:
    errs = [r.error for r in records]
    return {"max_error": float(max(errs)), "tolerance": tol,
            "passed": bool(all(e <= tol for e in errs))}


# -- runner ----------------------------------------------------------------------

_CELLS: dict[str, Callable] = {
    "t2-sample-budget": _t2_budget_cell,
    "t2-mixing": _t2_mixing_cell,
    "t2-retention": _t2_retention_cell,
    "routing": _routing_cell,
    "cpu": _cpu_cell,
    "oracle-check": _oracle_cell,
}


def _run_cell(args):
    cfg, value, seed = args
    if cfg.experiment == "t1-ais-gap":
        return _t1_cell(cfg, seed)
    return _CELLS[cfg.experiment](cfg, value, seed)


def _order(r: RunRecord):
    return (isinstance(r.value, str), r.value, r.seed)


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def run_cells(cfg: ExperimentConfig, n_workers: int | None = None) -> list[RunRecord]:
    if cfg.experiment == "t1-ais-gap":
        jobs = [(cfg, None, s) for s in cfg.seeds]
    else:
        jobs = [(cfg, v, s) for v in cfg.grid for s in cfg.seeds]
    n_workers = workers() if n_workers is None else n_workers
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(j) for j in jobs]
    h = cfg.hash()
    records = [r for chunk in chunks for r in chunk]
    for r in records:
        r.config_hash = h
    return sorted(records, key=_order)


def summarize(cfg_or_id, records: Sequence[RunRecord], options: dict | None = None) -> dict:
    exp = cfg_or_id.experiment if isinstance(cfg_or_id, ExperimentConfig) else cfg_or_id
    options = options or (cfg_or_id.options if isinstance(cfg_or_id, ExperimentConfig) else {})
    flagged = sum(r.flagged for r in records)
    if exp == "t1-ais-gap":
        out = summarize_t1(records)
    elif exp.startswith("t2-"):
        out = summarize_t2(records, options)
    elif exp == "oracle-check":
        out = summarize_oracle(records, float(options.get("tolerance", 1e-2)))
    else:
        metric = "accuracy"
        xs, acc = _mean_by_value(records, metric)
        out = {"values": xs, "accuracy": acc, "min_accuracy": min(acc) if acc else None}
        if exp == "routing":
            _, opt = _mean_by_value(records, "optimal_fraction")
            out["optimal_fraction"] = opt
            out["min_optimal_fraction"] = min(opt) if opt else None
    out.update({"experiment": exp, "n_records": len(records), "n_flagged": int(flagged)})
    return out


def run_experiment(cfg: ExperimentConfig, output: str | Path | None = None,
                   n_workers: int | None = None) -> tuple[list[RunRecord], dict]:
    """Run every cell, write ``records.csv`` and ``summary.json``; return both."""
    records = run_cells(cfg, n_workers)
    summary = summarize(cfg, records)
    summary["config_hash"] = cfg.hash()
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "records.csv", records)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return records, summary


def summarize_dir(path) -> dict:
    """Recompute the summary of a finished run; refuses tables mixing config hashes."""
    path = Path(path)
    records = read_records(path / "records.csv")
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        raise ConfigError(f"records mix config hashes {sorted(hashes)}")
    options = {}
    if (path / "config.json").exists():
        options = json.loads((path / "config.json").read_text()).get("options", {})
    exp = records[0].experiment if records else ""
    return summarize(exp, records, options)


FIGURES = {
    "t1": ("alpha_hat", "gap_v"),
    "t2-budget": ("value", "error"),
    "t2-mixing": ("t_mix", "error"),
    "t2-retention": ("value", "error"),
    "routing": ("value", "accuracy"),
    "cpu": ("value", "accuracy"),
    "oracle-check": ("value", "error"),
}


def plot_data(path, figure: str) -> list[tuple]:
    """Per-axis-value ``(x, y, y_stderr)`` triplets, averaged over seeds."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    records = [r for r in read_records(Path(path) / "records.csv") if not r.flagged]
    x_attr, y_attr = FIGURES[figure]
    by: dict = {}
    for r in records:
        by.setdefault(r.value, []).append(r)
    rows = []
    for v in sorted(by, key=lambda v: (isinstance(v, str), v)):
        group = by[v]
        ys = np.array([getattr(r, y_attr) for r in group], dtype=float)
        xs = [getattr(r, x_attr) for r in group]
        x = v if x_attr == "value" else float(np.mean(xs))
        se = float(ys.std(ddof=1) / math.sqrt(len(ys))) if len(ys) > 1 else 0.0
        rows.append((x, float(ys.mean()), se))
    return rows


def write_plot_data(path, figure: str, out=None) -> Path:
    rows = plot_data(path, figure)
    target = Path(out) if out else Path(path) / f"plot_{figure}.csv"
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "y", "y_stderr"))
        w.writerows(rows)
    return target
