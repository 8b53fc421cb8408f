"""Command-line interface.

Subcommands:

    simulate    generate an observation series from the configured model
    fit-guide   fit guide hyperparameters offline, emitting config YAML
    filter      one filter run on a data file (optionally with a figure)
    grid        the replicated comparison grid, emitting runs/metrics CSVs
    pmmh        a PMMH chain, emitting the trace as CSV
    metrics     recompute per-experiment metrics from a runs.csv
    report      render comparison figures from a metrics.csv

Any validation failure exits with a nonzero status and the offending
key named on stderr. BRIDGEPF_WORKERS sets the default worker count.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import yaml

from . import data as data_io
from .config import (
    ConfigError,
    ExperimentConfig,
    build_guide,
    build_model,
    build_observation_model,
    build_priors,
    build_transforms,
    load_config,
)
from .grid import (
    emit_results,
    generate_datasets,
    load_run_records,
    metrics_from_records,
    metrics_header,
    observations_for,
    run_grid,
    schedule_for,
)
from .metrics import ess_mcmc
from .pmmh import ProposalSpec, run_pmmh
from .smc import run_bootstrap_filter, run_bridge_filter


def _fail(message: str):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(2)


def _load(args) -> ExperimentConfig:
    try:
        config = load_config(args.config)
    except FileNotFoundError:
        _fail(f"config file not found: {args.config}")
    except ConfigError as exc:
        _fail(str(exc))
    if getattr(args, "seed", None) is not None:
        config.run["seed"] = args.seed
    if getattr(args, "particles", None):
        config.run["particles"] = args.particles
    if getattr(args, "replicates", None):
        config.run["replicates"] = args.replicates
    return config


def _single_series(config, args):
    if getattr(args, "data", None):
        times, values, _ = data_io.load_csv(args.data)
        return times, values[:, 0]
    datasets = generate_datasets(config)
    return datasets[0]


def cmd_simulate(args):
    config = _load(args)
    datasets = generate_datasets(config)
    times, values = datasets[args.dataset]
    data_io.write_series(args.out, times, values)
    print(f"wrote {len(times)} observations to {args.out}")
    return 0


def cmd_fit_guide(args):
    config = _load(args)
    times, values = _single_series(config, args)
    if config.guide["kind"] == "pd":
        from .guides import fit_pd_guide

        model = build_model(config)
        rng = np.random.default_rng(config.run["seed"])
        horizon, n_paths = args.pd_horizon, args.pd_paths
        x = np.zeros((n_paths, 1))
        saved = [x[:, 0].copy()]
        t = 0.0
        step = config.schedule["bridge_step"]
        while t < horizon - 1e-9:
            x = model.simulate(x, t, t + step, config.schedule["sim_substep"], rng)
            saved.append(x[:, 0].copy())
            t += step
        paths = np.column_stack(saved)
        grid_times = step * np.arange(paths.shape[1])
        params = fit_pd_guide(paths, grid_times, lags=[1, max(1, len(grid_times) // 4)])
        doc = {"guide": {"kind": "pd", "eps": float(params.eps),
                         "sigma2": float(params.sigma2),
                         "power": config.guide.get("power", 0.25)}}
    else:
        from .guides import fit_gp_guide

        fit = fit_gp_guide(times, values,
                           inflation=config.guide.get("inflation", 1.0),
                           power=config.guide.get("power", 1.0),
                           obs_var=config.guide.get("obs_var", 0.0))
        p = fit.params
        doc = {"guide": {"kind": "gp", "fit": False, "alpha": float(p.alpha),
                         "beta": float(p.beta), "inflation": float(p.inflation),
                         "power": float(p.power), "obs_var": float(p.obs_var),
                         "shift": float(p.shift), "scale": float(p.scale)}}
        if fit.degenerate:
            print("warning: degenerate (constant) series", file=sys.stderr)
    text = yaml.safe_dump(doc, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote guide parameters to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_filter(args):
    config = _load(args)
    times, values = _single_series(config, args)
    times = np.asarray(times)
    values = np.asarray(values)
    if config.model["kind"] == "sir":
        model = build_model(config, initial_infected=float(values[0]))
    else:
        model = build_model(config)
    schedule = schedule_for(config, times)
    obs = observations_for(config, times, values)
    obs_model = build_observation_model(config)
    rng = np.random.default_rng(config.run["seed"])
    n = args.n or config.run["particles"][0]
    store = bool(args.plot)
    if args.filter == "bridge":
        guide = build_guide(config, model, series=(times, values))
        out = run_bridge_filter(model, guide, schedule, obs, n,
                                rel_threshold=config.run["rel_threshold"], rng=rng,
                                resampler=config.run["resampler"],
                                obs_model=obs_model, store_history=store)
    else:
        out = run_bootstrap_filter(model, schedule, obs, n,
                                   rel_threshold=config.run["rel_threshold"],
                                   rng=rng, resampler=config.run["resampler"],
                                   obs_model=obs_model, store_history=store)
    print(f"log_z: {out.log_z:.10g}")
    print(f"elapsed_s: {out.elapsed:.6g}")
    print(f"resample_events: {len(out.resample_events)}")
    if args.plot:
        from .report import render_path_fan

        path = render_path_fan(out, schedule, obs, args.plot)
        print(f"wrote {path}")
    return 0


def cmd_grid(args):
    config = _load(args)
    records, metrics_rows = run_grid(config, workers=args.workers)
    out_dir = args.out_dir or config.output["directory"]
    runs_path, metrics_path = emit_results(records, metrics_rows, out_dir,
                                           config.run["filters"])
    print(f"wrote {runs_path}")
    print(f"wrote {metrics_path}")
    if args.plots:
        from .report import render_metric_scatters

        for p in render_metric_scatters(metrics_rows, out_dir):
            print(f"wrote {p}")
    return 0


def cmd_pmmh(args):
    config = _load(args)
    if config.pmmh is None:
        _fail("config has no pmmh section")
    times, values = _single_series(config, args)
    times = np.asarray(times)
    values = np.asarray(values)
    priors = build_priors(config)
    transforms = build_transforms(config)
    spec = ProposalSpec(cov=np.diag(np.asarray(config.pmmh["proposal_sd"]) ** 2))
    n = config.pmmh["particles"]
    kind = config.pmmh["likelihood"]

    if kind == "exact":
        if config.model["kind"] != "ou":
            _fail("pmmh.likelihood: exact likelihood only exists for the ou model")

        def loglik(theta, rng):
            return build_model(config, theta=theta).loglik_exact(times, values)
    else:
        schedule = schedule_for(config, times)
        obs = observations_for(config, times, values)
        obs_model = build_observation_model(config)

        def loglik(theta, rng):
            if config.model["kind"] == "sir":
                model = build_model(config, theta=theta,
                                    initial_infected=float(values[0]))
            else:
                model = build_model(config, theta=theta)
            if kind == "bridge":
                guide = build_guide(config, model, series=(times, values))
                out = run_bridge_filter(model, guide, schedule, obs, n,
                                        rel_threshold=config.run["rel_threshold"],
                                        rng=rng, obs_model=obs_model)
            else:
                out = run_bootstrap_filter(model, schedule, obs, n,
                                           rel_threshold=config.run["rel_threshold"],
                                           rng=rng, obs_model=obs_model)
            return out.log_z

    rng = np.random.default_rng(config.run["seed"])
    steps = args.steps or config.pmmh["steps"]
    burn = args.burn_in if args.burn_in is not None else config.pmmh["burn_in"]
    trace = run_pmmh(np.asarray(config.pmmh["init"]), steps, loglik, priors, spec,
                     rng, burn_in=burn, transforms=transforms)
    d = trace.thetas.shape[1]
    header = [f"theta{i + 1}" for i in range(d)] + ["log_z", "accepted"]
    rows = [[*trace.thetas[i], trace.log_zs[i], int(trace.accepted[i])]
            for i in range(len(trace))]
    data_io.write_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    print(f"acceptance_rate: {trace.acceptance_rate:.4f}")
    max_lag = min(len(trace) - 1, args.max_lag)
    print(f"ess_mcmc: {ess_mcmc(trace.thetas, max_lag):.1f}")
    return 0


def cmd_metrics(args):
    records = load_run_records(args.runs)
    filters = sorted({r.filter for r in records})
    rows = metrics_from_records(records, filters)
    header = metrics_header(filters)
    data_io.write_csv(args.out, header,
                      [[row.get(c, float("nan")) for c in header] for row in rows])
    print(f"wrote {args.out}")
    return 0


def cmd_report(args):
    import csv

    rows = []
    with open(args.metrics, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v) if v != "" else float("nan")
                except ValueError:
                    parsed[k] = v
            parsed["particles"] = int(float(row["particles"]))
            rows.append(parsed)
    from .report import render_metric_scatters

    paths = render_metric_scatters(rows, args.out_dir)
    if not paths:
        _fail("metrics file has no finite comparison columns to plot")
    for p in paths:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgepf",
        description="Bridge particle filters for highly informative observations")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data_arg=True):
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override run.seed")
        if data_arg:
            p.add_argument("--data", help="observation CSV (default: simulate)")

    p = sub.add_parser("simulate", help="generate a dataset")
    add_common(p, data_arg=False)
    p.add_argument("--dataset", type=int, default=0, help="dataset index")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("fit-guide", help="fit guide hyperparameters offline")
    add_common(p)
    p.add_argument("--out", help="output YAML (default: stdout)")
    p.add_argument("--pd-horizon", type=float, default=30.0,
                   help="simulation horizon for the periodic fit")
    p.add_argument("--pd-paths", type=int, default=2000,
                   help="number of simulated paths for the periodic fit")
    p.set_defaults(fn=cmd_fit_guide)

    p = sub.add_parser("filter", help="one filter run")
    add_common(p)
    p.add_argument("--filter", choices=("bridge", "bootstrap"), default="bridge")
    p.add_argument("--n", type=int, help="particle count (default: first of run.particles)")
    p.add_argument("--plot", help="write a particle-path figure to this path")
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("grid", help="replicated comparison grid")
    add_common(p, data_arg=False)
    p.add_argument("--out-dir", help="output directory (default: output.directory)")
    p.add_argument("--workers", type=int, help="process pool size")
    p.add_argument("--particles", type=int, nargs="+", help="override run.particles")
    p.add_argument("--replicates", type=int, help="override run.replicates")
    p.add_argument("--plots", action="store_true", help="also render figures")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("pmmh", help="run a PMMH chain")
    add_common(p)
    p.add_argument("--steps", type=int, help="override pmmh.steps")
    p.add_argument("--burn-in", type=int, help="override pmmh.burn_in")
    p.add_argument("--max-lag", type=int, default=250, help="autocorrelation cap")
    p.add_argument("--out", required=True, help="trace CSV path")
    p.set_defaults(fn=cmd_pmmh)

    p = sub.add_parser("metrics", help="recompute metrics from runs.csv")
    p.add_argument("--runs", required=True, help="runs.csv from a grid")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("report", help="render comparison figures")
    p.add_argument("--metrics", required=True, help="metrics.csv from a grid")
    p.add_argument("--out-dir", required=True, help="figure directory")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
