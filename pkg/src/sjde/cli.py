"""Command-line experiment runner.

Subcommands: ``run`` sweeps target accuracy levels for one scheme and writes
a CSV result table; ``grid`` builds and serializes an offline cost grid;
``schedule`` computes the deterministic multi-hypothesis stopping schedule;
``preset`` exports a built-in experiment configuration for editing.

CSV schema (fixed order, one row per accuracy level)::

    scheme,alpha,trials,avg_T,se_T,cost,se_cost,trunc_rate,seed

``trials`` counts replicates per true hypothesis; ``cost`` sums the
per-hypothesis means of the realized contributions.  Standard-error columns
are empty when a single trial cannot support them.  Identical invocations
with the same seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import calibrate_sprt, run_ml_mmse, run_sprt_mmse
from .config import ExperimentConfig, load_config, save_config
from .scenarios import (
    CognitiveRadioScenario,
    cognitive_radio_config,
    lqg_demo_config,
    smart_grid_ieee4_config,
)
from .stopping import (
    AlphaUnreachableError,
    DeterministicSchedule,
    build_cost_grid,
    compute_deterministic_schedule,
    load_cost_grid,
    run_sjde,
    save_cost_grid,
    simulate_stream,
)
from .rng import stream_seed

CSV_COLUMNS = ("scheme", "alpha", "trials", "avg_T", "se_T", "cost", "se_cost", "trunc_rate", "seed")
SCHEMES = ("sjde", "sprt-mmse", "ml-mmse")
PRESETS = ("lqg-demo", "cognitive-radio", "smart-grid-ieee4")


def _fmt(value) -> str:
    return repr(float(value))


def _parse_alpha_list(text: str) -> list[float]:
    try:
        alphas = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"cannot parse alpha list {text!r}") from exc
    if not alphas:
        raise ValueError("the alpha list must be nonempty")
    return alphas


def _parse_axis_spec(text: str, dims: int) -> list[np.ndarray]:
    """Parse per-dimension breakpoints like ``0:40:21`` (start:stop:count)."""
    specs = [part for part in text.split(",") if part.strip()]
    if len(specs) == 1 and dims > 1:
        specs = specs * dims
    axes = []
    for spec in specs:
        pieces = spec.split(":")
        if len(pieces) != 3:
            raise ValueError(f"axis spec {spec!r} is not start:stop:count")
        start, stop, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        if count < 1:
            raise ValueError("axis count must be at least 1")
        axes.append(np.linspace(start, stop, count))
    return axes


def _effective_run(cfg: ExperimentConfig, args, alpha: float):
    run = cfg.run
    updates = {"alpha": alpha}
    if getattr(args, "t_max", None) is not None:
        updates["t_max"] = args.t_max
    if getattr(args, "mc_samples", None) is not None:
        updates["mc_samples"] = args.mc_samples
    return dataclasses.replace(run, **updates)


def _sjde_trial_job(args):
    model, weights, run, truth, path_seed, cost_seed, grid, schedule = args
    stream = simulate_stream(model, truth, path_seed, run.t_max)
    result = run_sjde(model, weights, run, stream, cost_seed, grid=grid, schedule=schedule)
    return result.stopping_time, result.truncated, result.total_cost


def _sprt_trial_job(args):
    model, weights, thresholds, t_max, truth, path_seed = args
    stream = simulate_stream(model, truth, path_seed, t_max)
    result = run_sprt_mmse(model, weights, thresholds, stream, t_max)
    return result.stopping_time, result.truncated, result.total_cost


def _ml_trial_job(args):
    model, weights, schedule_T, truncated, truth, path_seed = args
    stream = simulate_stream(model, truth, path_seed, schedule_T)
    result = run_ml_mmse(model, weights, schedule_T, stream)
    return result.stopping_time, truncated, result.total_cost


def _run_jobs(job, argument_list, workers: int):
    if workers > 1:
        chunk = max(1, len(argument_list) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, argument_list, chunksize=chunk))
    return [job(arguments) for arguments in argument_list]


def _aggregate_row(scheme, alpha, trials, seed, outcomes, n_truths) -> dict:
    times = np.array([o[0] for o in outcomes], dtype=float)
    truncations = np.array([o[1] for o in outcomes], dtype=bool)
    costs = np.array([o[2] for o in outcomes], dtype=float).reshape(n_truths, trials)

    cost = float(np.sum(np.mean(costs, axis=1)))
    if trials > 1:
        se_T = _fmt(np.std(times, ddof=1) / np.sqrt(times.size))
        se_cost = _fmt(np.sqrt(np.sum(np.var(costs, axis=1, ddof=1) / trials)))
    else:
        se_T = se_cost = ""
    return {
        "scheme": scheme,
        "alpha": _fmt(alpha),
        "trials": str(trials),
        "avg_T": _fmt(np.mean(times)),
        "se_T": se_T,
        "cost": _fmt(cost),
        "se_cost": se_cost,
        "trunc_rate": _fmt(np.mean(truncations)),
        "seed": str(seed),
    }


def _schedule_for(cfg, run, seed) -> DeterministicSchedule:
    try:
        return compute_deterministic_schedule(
            cfg.model, cfg.weights, run.alpha, run.t_max, run.mc_samples,
            stream_seed(seed, "schedule"),
        )
    except AlphaUnreachableError as exc:
        print(
            f"warning: target level {run.alpha} unreachable within t_max={run.t_max}; "
            "running at the horizon cap",
            file=sys.stderr,
        )
        return DeterministicSchedule(
            stopping_time=run.t_max, costs=exc.cost_curve, reached=False
        )


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.run.master_seed
    alphas = _parse_alpha_list(args.alpha)
    model, weights = cfg.model, cfg.weights
    truths = range(model.n_hypotheses)

    grid = None
    if args.grid is not None:
        grid = load_cost_grid(args.grid, model)

    rows = []
    for alpha_index, alpha in enumerate(alphas):
        run = _effective_run(cfg, args, alpha)
        if args.scheme == "sjde":
            schedule = None
            if not model.is_binary:
                schedule = _schedule_for(cfg, run, seed)
            jobs = [
                (
                    model, weights, run, truth,
                    stream_seed(seed, "trial", truth, trial),
                    stream_seed(seed, "cost", truth, trial),
                    grid, schedule,
                )
                for truth in truths
                for trial in range(args.trials)
            ]
            outcomes = _run_jobs(_sjde_trial_job, jobs, args.workers)
        elif args.scheme == "sprt-mmse":
            if not model.is_binary:
                raise ValueError("the SPRT baseline applies to binary configurations")
            calibration = calibrate_sprt(
                model, weights, alpha, args.trials,
                stream_seed(seed, "sprt-calibration", alpha_index), t_max=run.t_max,
            )
            jobs = [
                (
                    model, weights, calibration.thresholds, run.t_max, truth,
                    stream_seed(seed, "trial", truth, trial),
                )
                for truth in truths
                for trial in range(args.trials)
            ]
            outcomes = _run_jobs(_sprt_trial_job, jobs, args.workers)
        else:  # ml-mmse
            if model.is_binary:
                raise ValueError("the ML baseline pairs with multi-hypothesis configurations")
            schedule = _schedule_for(cfg, run, seed)
            jobs = [
                (
                    model, weights, schedule.stopping_time, not schedule.reached, truth,
                    stream_seed(seed, "trial", truth, trial),
                )
                for truth in truths
                for trial in range(args.trials)
            ]
            outcomes = _run_jobs(_ml_trial_job, jobs, args.workers)

        row = _aggregate_row(args.scheme, alpha, args.trials, seed, outcomes, len(truths))
        if float(row["trunc_rate"]) == 1.0:
            print(
                f"warning: every run truncated at t_max for alpha={alpha}", file=sys.stderr
            )
        rows.append(row)

    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row[col] for col in CSV_COLUMNS])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_grid(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.run.master_seed
    mc_samples = args.mc_samples if args.mc_samples is not None else cfg.run.mc_samples
    from .stopping import _grid_layout  # local import: layout drives the axis count

    _, _, dims = _grid_layout(cfg.model)
    axes = _parse_axis_spec(args.grid_axes, dims)
    started = time.perf_counter()
    grid = build_cost_grid(axes, cfg.model, cfg.weights, mc_samples, seed, workers=args.workers)
    elapsed = time.perf_counter() - started
    save_cost_grid(grid, args.out)
    print(f"built {grid.n_points} grid points in {elapsed:.2f}s -> {args.out}")
    return 0


def cmd_schedule(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.run.master_seed
    alpha = args.alpha if args.alpha is not None else cfg.run.alpha
    run = _effective_run(cfg, args, alpha)

    def write_curve(costs):
        with open(args.out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "cost", "se_cost"])
            for t, est in enumerate(costs, start=1):
                writer.writerow([str(t), _fmt(est.mean), _fmt(est.std_error)])

    try:
        schedule = compute_deterministic_schedule(
            cfg.model, cfg.weights, alpha, run.t_max, run.mc_samples,
            stream_seed(seed, "schedule"),
        )
    except AlphaUnreachableError as exc:
        write_curve(exc.cost_curve)
        print(
            f"target level {alpha} unreachable within t_max={run.t_max}; "
            f"curve written to {args.out}",
            file=sys.stderr,
        )
        return 3
    write_curve(schedule.costs)
    print(f"stopping time T={schedule.stopping_time} (curve written to {args.out})")
    return 0


def _build_preset(name: str) -> ExperimentConfig:
    if name == "lqg-demo":
        return lqg_demo_config()
    if name == "cognitive-radio":
        scenario = CognitiveRadioScenario(
            n_users=2,
            channel_means=np.full(4, 1.0),
            channel_variances=np.full(4, 0.5),
            noise_variance=1.0,
            p_max=1.0,
            interference_limit_1=0.5,
            interference_limit_2=0.5,
        )
        return cognitive_radio_config(scenario)
    return smart_grid_ieee4_config()


def cmd_preset(args) -> int:
    save_config(_build_preset(args.name), args.out)
    print(f"wrote {args.name} configuration to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sjde",
        description="Sequential joint detection and estimation experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sweep accuracy levels for one scheme, write a CSV table")
    run.add_argument("--config", required=True, help="experiment configuration (JSON)")
    run.add_argument("--scheme", required=True, choices=SCHEMES)
    run.add_argument("--alpha", required=True, help="comma-separated target accuracy levels")
    run.add_argument("--trials", type=int, default=1000, help="replicates per true hypothesis")
    run.add_argument("--seed", type=int, default=None, help="master seed (default: from config)")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--grid", default=None, help="cost-grid file for grid-lookup stopping")
    run.add_argument("--t-max", dest="t_max", type=int, default=None)
    run.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    run.add_argument("--workers", type=int, default=1, help="worker processes for trials")
    run.set_defaults(handler=cmd_run)

    grid = sub.add_parser("grid", help="build and serialize an offline cost grid")
    grid.add_argument("--config", required=True)
    grid.add_argument(
        "--grid-axes", dest="grid_axes", required=True,
        help="per-dimension breakpoints start:stop:count, comma-separated",
    )
    grid.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    grid.add_argument("--seed", type=int, default=None)
    grid.add_argument("--out", required=True)
    grid.add_argument("--workers", type=int, default=1)
    grid.set_defaults(handler=cmd_grid)

    schedule = sub.add_parser("schedule", help="compute the deterministic stopping schedule")
    schedule.add_argument("--config", required=True)
    schedule.add_argument("--alpha", type=float, default=None)
    schedule.add_argument("--t-max", dest="t_max", type=int, default=None)
    schedule.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    schedule.add_argument("--seed", type=int, default=None)
    schedule.add_argument("--out", required=True, help="output CSV path for the cost curve")
    schedule.set_defaults(handler=cmd_schedule)

    preset = sub.add_parser("preset", help="export a built-in configuration")
    preset.add_argument("name", choices=PRESETS)
    preset.add_argument("--out", required=True)
    preset.set_defaults(handler=cmd_preset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
