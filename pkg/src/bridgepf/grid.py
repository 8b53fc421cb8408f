"""Replicated comparison grids: datasets x particle counts x filter kinds.

A grid run enumerates every (dataset, N) experiment, applies each
configured filter Z times with reproducibly derived seeds, reduces each
run to one RunRecord row, and computes the batch comparison metrics per
experiment with bootstrap and bridge columns side by side for scatter
plotting. Cells execute in a process pool; records are assembled in a
fixed order so the emitted CSVs are byte-identical for a given
(config, master seed) regardless of worker count. Wall-clock timing is
measured around the filter call only; the alternative deterministic
"work" timing charges one microsecond per particle-substep so that even
the timing columns reproduce exactly.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import (
    ExperimentConfig,
    build_guide,
    build_model,
    build_observation_model,
    default_workers,
)
from .data import load_csv, simulate_dataset, write_csv
from .metrics import EstimateBatch, time_adjusted
from .smc import Observations, Schedule, run_bootstrap_filter, run_bridge_filter

_DATA_NAMESPACE = 90001  # spawn-key prefix separating dataset streams from runs

RUNS_HEADER = ["experiment", "dataset", "particles", "filter", "replicate",
               "log_z", "elapsed", "resample_events", "seed", "true_log_z"]


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    dataset: int
    particles: int
    filter: str
    replicate: int
    log_z: float
    elapsed: float
    resample_events: int
    seed: str
    true_log_z: float

    def row(self):
        return [self.experiment, self.dataset, self.particles, self.filter,
                self.replicate, self.log_z, self.elapsed, self.resample_events,
                self.seed, self.true_log_z]


def generate_datasets(config: ExperimentConfig):
    """Return the list of (times, values) observation series for the grid."""
    if config.data["files"]:
        out = []
        for path in config.data["files"]:
            times, values, _ = load_csv(path)
            out.append((times, values[:, 0]))
        return out
    sim = config.data["simulate"]
    datasets = []
    for i in range(sim["datasets"]):
        rng = np.random.default_rng(
            np.random.SeedSequence(config.run["seed"],
                                   spawn_key=(_DATA_NAMESPACE, i)))
        times = sim["spacing"] * np.arange(sim["observations"] + 1)
        model = build_model(config)
        if config.model["kind"] == "sir":
            model = build_model(config, initial_infected=sim["x0"])
            x0 = model.initial_sample(1, rng)[0]
            obs_model = build_observation_model(config)
            _, series, _ = simulate_dataset(model, times, rng,
                                            sim_substep=config.schedule["sim_substep"],
                                            x0=x0, obs_model=obs_model)
        else:
            _, series, _ = simulate_dataset(model, times, rng,
                                            sim_substep=config.schedule["sim_substep"],
                                            x0=[sim["x0"]])
        datasets.append((times, series))
    return datasets


def true_log_likelihood(config: ExperimentConfig, times, values) -> float:
    if config.run["truth"] != "closed-form":
        return float("nan")
    return build_model(config).loglik_exact(times, values)


def plan_grid(config: ExperimentConfig):
    """Enumerate (dataset index, particle count) experiments for the grid."""
    n_datasets = (len(config.data["files"]) if config.data["files"]
                  else config.data["simulate"]["datasets"])
    return [(d, n) for d in range(n_datasets) for n in config.run["particles"]]


def observations_for(config: ExperimentConfig, times, values):
    if config.model["kind"] == "sir":
        # the first case count pins the initial state; later counts are scored
        return Observations(times=times[1:], values=values[1:], kind="indirect")
    return Observations(times=times, values=np.asarray(values)[:, None],
                        kind="state")


def schedule_for(config: ExperimentConfig, times):
    t0 = float(times[0])
    obs_times = times if config.model["kind"] != "sir" else times[1:]
    return Schedule.build(obs_times, bridge_step=config.schedule["bridge_step"],
                          sim_substep=config.schedule["sim_substep"], t0=t0)


def run_cell(args):
    """Run all replicates of one (dataset, N, filter) cell; returns rows."""
    (config, d_idx, times, values, n_idx, n_particles, f_idx, filter_kind,
     truth) = args
    times = np.asarray(times)
    values = np.asarray(values)
    if config.model["kind"] == "sir":
        model = build_model(config, initial_infected=float(values[0]))
    else:
        model = build_model(config)
    schedule = schedule_for(config, times)
    obs = observations_for(config, times, values)
    obs_model = build_observation_model(config)
    guide = None
    if filter_kind == "bridge":
        guide = build_guide(config, model, series=(times, values))

    records = []
    for rep in range(config.run["replicates"]):
        seed_key = (d_idx, n_idx, f_idx, rep)
        rng = np.random.default_rng(
            np.random.SeedSequence(config.run["seed"], spawn_key=seed_key))
        try:
            if filter_kind == "bridge":
                out = run_bridge_filter(model, guide, schedule, obs, n_particles,
                                        rel_threshold=config.run["rel_threshold"],
                                        rng=rng, resampler=config.run["resampler"],
                                        obs_model=obs_model)
            else:
                out = run_bootstrap_filter(model, schedule, obs, n_particles,
                                           rel_threshold=config.run["rel_threshold"],
                                           rng=rng,
                                           resampler=config.run["resampler"],
                                           obs_model=obs_model)
            log_z, elapsed = out.log_z, out.elapsed
            n_events, workload = len(out.resample_events), out.work
        except Exception:
            # an individual failed run records as dead; the grid continues
            log_z, elapsed, n_events, workload = float("-inf"), 1e-9, 0, 1
        if config.run["timing"] == "work":
            elapsed = workload * 1e-6
        records.append(RunRecord(
            experiment=f"d{d_idx}-n{n_particles}",
            dataset=d_idx,
            particles=n_particles,
            filter=filter_kind,
            replicate=rep,
            log_z=log_z,
            elapsed=elapsed,
            resample_events=n_events,
            seed=".".join(str(k) for k in seed_key),
            true_log_z=truth,
        ))
    return records


def run_grid(config: ExperimentConfig, workers: int | None = None):
    """Execute the whole grid; returns (records, metrics rows).

    Individual run failures are recorded as dead runs (log_z = -inf)
    rather than aborting the grid.
    """
    datasets = generate_datasets(config)
    truths = [true_log_likelihood(config, t, v) for t, v in datasets]
    tasks = []
    for d_idx, (times, values) in enumerate(datasets):
        for n_idx, n in enumerate(config.run["particles"]):
            for f_idx, filt in enumerate(config.run["filters"]):
                tasks.append((config, d_idx, list(times), list(values),
                              n_idx, n, f_idx, filt, truths[d_idx]))

    workers = default_workers(config) if workers is None else max(1, workers)
    if workers == 1 or len(tasks) == 1:
        cell_results = [run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cell_results = list(pool.map(run_cell, tasks))

    records = [rec for cell in cell_results for rec in cell]
    metrics_rows = metrics_from_records(records, config.run["filters"])
    return records, metrics_rows


def metrics_from_records(records, filters):
    """Per-experiment metric rows with one column group per filter kind."""
    by_exp = {}
    for rec in records:
        by_exp.setdefault((rec.dataset, rec.particles), []).append(rec)
    rows = []
    for (dataset, particles) in sorted(by_exp):
        recs = by_exp[(dataset, particles)]
        truth = recs[0].true_log_z
        row = {"dataset": dataset, "particles": particles, "true_log_z": truth}
        for filt in filters:
            sub = [r for r in recs if r.filter == filt]
            if not sub:
                continue
            batch = EstimateBatch(
                log_z=np.array([r.log_z for r in sub]),
                times=np.array([r.elapsed for r in sub]),
                true_log_z=None if np.isnan(truth) else truth)
            rep = time_adjusted(batch)
            row[f"{filt}_mse"] = rep.mse
            row[f"{filt}_ess"] = rep.ess
            row[f"{filt}_car"] = rep.car
            row[f"{filt}_mse_metric"] = rep.mse_metric
            row[f"{filt}_ess_metric"] = rep.ess_metric
            row[f"{filt}_car_metric"] = rep.car_metric
            row[f"{filt}_mean_time"] = rep.mean_time
        rows.append(row)
    return rows


def metrics_header(filters):
    cols = ["dataset", "particles", "true_log_z"]
    for filt in filters:
        cols += [f"{filt}_{m}" for m in ("mse", "ess", "car", "mse_metric",
                                         "ess_metric", "car_metric", "mean_time")]
    return cols


def emit_results(records, metrics_rows, out_dir, filters):
    """Write runs.csv and metrics.csv; returns their paths."""
    if not records:
        raise ValueError("nothing to emit: no run records")
    os.makedirs(out_dir, exist_ok=True)
    runs_path = os.path.join(out_dir, "runs.csv")
    write_csv(runs_path, RUNS_HEADER, [r.row() for r in records])
    metrics_path = os.path.join(out_dir, "metrics.csv")
    header = metrics_header(filters)
    rows = [[row.get(c, float("nan")) for c in header] for row in metrics_rows]
    write_csv(metrics_path, header, rows)
    return runs_path, metrics_path


def load_run_records(path):
    """Re-ingest a runs.csv into RunRecord objects (for metric recomputation)."""
    import csv as _csv

    records = []
    with open(path, "r", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            records.append(RunRecord(
                experiment=row["experiment"],
                dataset=int(row["dataset"]),
                particles=int(row["particles"]),
                filter=row["filter"],
                replicate=int(row["replicate"]),
                log_z=float(row["log_z"]) if row["log_z"] else float("-inf"),
                elapsed=float(row["elapsed"]),
                resample_events=int(row["resample_events"]),
                seed=row["seed"],
                true_log_z=float(row["true_log_z"]) if row["true_log_z"] else float("nan"),
            ))
    return records
