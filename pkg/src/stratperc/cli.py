"""Command-line entry point: run, sweep, verify.

Artifacts are written deterministically: runs are keyed by (cell, seed) and
merged in that order regardless of execution order, floats are serialized via
repr, and JSON keys are sorted, so identical configs reproduce identical
bytes (the contract behind ``--parallel``).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import logging
import math
import os
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import nonstrategic_active_perceptron, passive_strategic_perceptron
from .config import ExperimentConfig, load_config
from .environment import (
    BOUNDARY_BAND_FLIP,
    RANDOM_FLIP,
    DrawTraceWriter,
    EnvConfig,
    Hypothesis,
    boundary_band_noise,
    random_flip_noise,
    realizable_noise,
    truthful_config,
)
from .errors import DrawBudgetExceededError, InsufficientDataError, InvalidConfigError
from .evaluation import MistakeLedger, fit_scaling, mc_error
from .geometry import make_rng, normalize, sample_unit_sphere
from .learner import (
    CSV_HEADER,
    LabelOracle,
    RunTrace,
    initialize,
    make_schedule,
    outer_loop,
)
from .svgchart import line_chart
from .verify import run_suite

log = logging.getLogger("stratperc")

OUT_DIR_ENV = "STRATPERC_OUT"

# per-run stream indices off the base seed
_STREAM_DRAWS = 0
_STREAM_U = 1
_STREAM_V0 = 2
_STREAM_MC = 3

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DRAW_BUDGET = 3

SCALING_THRESHOLDS = {
    "label_queries": 0.85,
    "unlabeled_draws": 0.80,
    "additional_mistakes": 0.70,
}


def run_id_for(exp: ExperimentConfig, seed: int) -> str:
    return f"{exp.learner}_d{exp.d}_eps{exp.epsilon:g}_nu{exp.nu:g}_s{seed}"


def _noise_for(exp: ExperimentConfig):
    if exp.noise_kind == RANDOM_FLIP:
        return random_flip_noise(exp.nu)
    if exp.noise_kind == BOUNDARY_BAND_FLIP:
        return boundary_band_noise(exp.nu, exp.d)
    return realizable_noise()


def _config_echo(exp: ExperimentConfig, seed: int) -> dict:
    echo = exp.as_dict()
    for grid_key in ("grid_d", "grid_epsilon", "grid_nu", "grid_learner"):
        echo.pop(grid_key, None)
    echo.pop("out_dir", None)
    echo.pop("seeds", None)
    echo["seed"] = seed
    return echo


def run_single(exp: ExperimentConfig, seed: int, trace_dir: str | None = None) -> RunTrace:
    """Execute one seeded run of the configured learner and return its trace."""
    d = exp.d
    u = sample_unit_sphere(d, make_rng(seed, _STREAM_U))
    cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=exp.cost,
                    noise=_noise_for(exp), seed=seed)
    run_cfg = truthful_config(cfg) if exp.learner == "nonstrategic-active" else cfg
    rng = make_rng(seed, _STREAM_DRAWS)
    oracle = LabelOracle()
    ledger = MistakeLedger()
    draw_trace = None
    trace_fh = None
    if exp.trace_draws and trace_dir is not None:
        trace_fh = open(Path(trace_dir) / f"trace_{run_id_for(exp, seed)}.csv", "w")
        draw_trace = DrawTraceWriter(trace_fh, d)

    started = time.perf_counter()
    init_info = None
    init_purity = 0
    try:
        if exp.v0 is not None:
            v0 = normalize(np.asarray(exp.v0, dtype=float))
        elif exp.init == "master-init":
            res = initialize(
                run_cfg, oracle, exp.delta, run_cfg.c, rng,
                C_m=exp.C_m, C_b=exp.C_b, band_log_form=exp.band_log_form,
                draw_cap_factor=exp.draw_cap, ledger=ledger,
            )
            v0 = res.v
            init_info = res.as_dict()
            init_purity = res.purity_violations
        else:
            v0 = sample_unit_sphere(d, make_rng(seed, _STREAM_V0))
            if float(v0 @ u) < 0.0:
                v0 = -v0

        if exp.learner == "passive-strategic":
            v, trace = passive_strategic_perceptron(
                run_cfg, oracle, v0, exp.epsilon, run_cfg.c, rng,
                max_rounds=exp.max_rounds, check_every=exp.check_every, ledger=ledger,
            )
        elif exp.learner == "nonstrategic-active":
            schedule = make_schedule(d, exp.epsilon, exp.delta, exp.C_m, exp.C_b, exp.band_log_form)
            v, trace = nonstrategic_active_perceptron(
                run_cfg, oracle, v0, exp.epsilon, exp.delta, schedule, rng,
                draw_cap_factor=exp.draw_cap, ledger=ledger,
            )
        else:
            schedule = make_schedule(d, exp.epsilon, exp.delta, exp.C_m, exp.C_b, exp.band_log_form)
            v, trace = outer_loop(
                run_cfg, oracle, v0, exp.epsilon, exp.delta, schedule, run_cfg.c, rng,
                draw_cap_factor=exp.draw_cap, ledger=ledger, draw_trace=draw_trace,
            )
    finally:
        if trace_fh is not None:
            trace_fh.close()

    if init_info is not None:
        trace.init = init_info
        trace.purity_violations += init_purity
    if exp.mc_samples:
        report = mc_error(v, cfg, exp.mc_samples, make_rng(seed, _STREAM_MC))
        trace.mc = report.as_dict()
    trace.run_id = run_id_for(exp, seed)
    trace.seed = seed
    trace.config = _config_echo(exp, seed)
    trace.duration = time.perf_counter() - started
    return trace


def expand_cells(exp: ExperimentConfig) -> list[ExperimentConfig]:
    """Cross product of the configured grid axes (scalar fields as fallback)."""
    ds = exp.grid_d if exp.grid_d is not None else [exp.d]
    epsilons = exp.grid_epsilon if exp.grid_epsilon is not None else [exp.epsilon]
    nus = exp.grid_nu if exp.grid_nu is not None else [exp.nu]
    learners = exp.grid_learner if exp.grid_learner is not None else [exp.learner]
    cells = []
    for d, eps, nu, lr in itertools.product(ds, epsilons, nus, learners):
        cells.append(replace(exp, d=d, epsilon=eps, nu=nu, learner=lr,
                             grid_d=None, grid_epsilon=None, grid_nu=None, grid_learner=None))
    return cells


def _worker(payload):
    exp, seed, trace_dir = payload
    return run_single(exp, seed, trace_dir)


def execute_runs(cells: list[ExperimentConfig], parallel: int, trace_dir: str | None) -> list[RunTrace]:
    """All (cell, seed) runs, merged in deterministic (cell, seed) order."""
    jobs = [(cell, seed, trace_dir) for cell in cells for seed in cell.seeds]
    if parallel <= 1 or len(jobs) <= 1:
        return [_worker(job) for job in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_worker, jobs))


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_artifacts(out: Path, traces: list[RunTrace]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    lines = [CSV_HEADER]
    for t in traces:
        lines.extend(t.csv_rows())
    (out / "epochs.csv").write_text("\n".join(lines) + "\n")
    for t in traces:
        _dump_json(out / "runs" / f"{t.run_id}.json", t.to_summary_dict())
    _dump_json(out / "aggregate.json", aggregate_summary(traces))


def aggregate_summary(traces: list[RunTrace]) -> dict:
    cells: dict[tuple, list[RunTrace]] = {}
    for t in traces:
        key = (t.learner, t.config["d"], t.config["epsilon"], t.config["nu"])
        cells.setdefault(key, []).append(t)
    cell_rows = []
    for key in sorted(cells):
        learner, d, eps, nu = key
        ts = cells[key]
        excesses = [t.final_theta / math.pi for t in ts]
        cell_rows.append(
            {
                "learner": learner,
                "d": d,
                "epsilon": eps,
                "nu": nu,
                "n_seeds": len(ts),
                "success_rate": sum(e <= eps for e in excesses) / len(ts),
                "median_final_theta": statistics.median(t.final_theta for t in ts),
                "median_excess_error": statistics.median(excesses),
                "median_labels": statistics.median(t.total_labels for t in ts),
                "median_draws": statistics.median(t.total_draws for t in ts),
                "median_mistakes": statistics.median(t.total_mistakes for t in ts),
                "median_additional": statistics.median(t.ledger.additional for t in ts),
            }
        )
    return {
        "n_runs": len(traces),
        "cells": cell_rows,
        "run_ids": [t.run_id for t in traces],
        "purity_violations": sum(t.purity_violations for t in traces),
    }


def scaling_report(traces: list[RunTrace]) -> dict:
    report: dict = {}
    groups: dict[tuple, list[RunTrace]] = {}
    nus = {t.config["nu"] for t in traces}
    for t in traces:
        groups.setdefault((t.learner, t.config["nu"]), []).append(t)
    for (learner, nu), ts in sorted(groups.items()):
        entry = {}
        for predictor, threshold in SCALING_THRESHOLDS.items():
            try:
                fit = fit_scaling(ts, predictor)
                entry[predictor] = {**fit.as_dict(), "threshold": threshold,
                                    "passes": fit.r_squared >= threshold}
            except InsufficientDataError as exc:
                entry[predictor] = {"insufficient_data": str(exc)}
        key = learner if len(nus) == 1 else f"{learner},nu={nu:g}"
        report[key] = entry
    return report


def write_charts(out: Path, traces: list[RunTrace]) -> None:
    charts = out / "charts"
    charts.mkdir(parents=True, exist_ok=True)
    by_cell: dict[tuple, list[RunTrace]] = {}
    for t in traces:
        by_cell.setdefault((t.learner, t.config["d"], t.config["epsilon"]), []).append(t)

    queries: dict[str, list[tuple[float, float]]] = {}
    for (learner, d, eps), ts in sorted(by_cell.items()):
        label = f"{learner} d={d}"
        queries.setdefault(label, []).append(
            (math.log(1.0 / eps), float(statistics.median(t.total_labels for t in ts)))
        )
    (charts / "queries_vs_ln_inv_epsilon.svg").write_text(
        line_chart(queries, "label queries vs ln(1/epsilon)", "ln(1/epsilon)", "median label queries")
    )

    smallest_eps = min(key[2] for key in by_cell)
    mistakes: dict[str, list[tuple[float, float]]] = {}
    for (learner, d, eps), ts in sorted(by_cell.items()):
        if eps != smallest_eps or not ts[0].epochs:
            continue
        label = f"{learner} d={d}"
        k0 = len(ts[0].epochs)
        for k in range(k0):
            med = statistics.median(t.epochs[k].mistakes for t in ts if len(t.epochs) > k)
            mistakes.setdefault(label, []).append((k + 1, float(med)))
    (charts / "mistakes_vs_epoch.svg").write_text(
        line_chart(mistakes, f"mistakes per epoch (epsilon = {smallest_eps:g})", "epoch k", "median mistakes_k")
    )


def _resolve_out(args, exp: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if exp.out_dir:
        return Path(exp.out_dir)
    return Path(os.environ.get(OUT_DIR_ENV, "out"))


def _apply_flags(exp: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed_list:
        seeds = [int(s) for s in args.seed_list.split(",") if s.strip() != ""]
        exp = replace(exp, seeds=seeds)
    elif args.seeds is not None:
        exp = replace(exp, seeds=list(range(args.seeds)))
    return exp


def _load_validated(args) -> ExperimentConfig:
    exp = load_config(args.config)
    exp = _apply_flags(exp, args)
    for warning in exp.validate():
        log.warning(warning)
    return exp


def cmd_run(args) -> int:
    exp = _load_validated(args)
    out = _resolve_out(args, exp)
    out.mkdir(parents=True, exist_ok=True)
    traces = execute_runs([exp], args.parallel, str(out) if exp.trace_draws else None)
    write_artifacts(out, traces)
    if args.svg:
        write_charts(out, traces)
    log.info("wrote %d runs to %s", len(traces), out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _load_validated(args)
    out = _resolve_out(args, exp)
    out.mkdir(parents=True, exist_ok=True)
    cells = expand_cells(exp)
    traces = execute_runs(cells, args.parallel, str(out) if exp.trace_draws else None)
    write_artifacts(out, traces)
    _dump_json(out / "scaling_report.json", scaling_report(traces))
    if args.svg:
        write_charts(out, traces)
    log.info("wrote %d runs over %d cells to %s", len(traces), len(cells), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.suite)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratperc",
        description="Active halfspace learning against strategic agents: experiments and checks.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} an experiment config")
        p.add_argument("--config", required=True, help="path to the experiment file")
        p.add_argument("--out", help="output directory (default: config out_dir, "
                                     f"then ${OUT_DIR_ENV}, then ./out)")
        p.add_argument("--seeds", type=int, help="run seeds 0..N-1 (overrides config)")
        p.add_argument("--seed-list", help="comma-separated explicit seeds (overrides config)")
        p.add_argument("--parallel", type=int, default=1, help="worker processes")
        p.add_argument("--svg", action="store_true", help="emit static SVG charts")
        p.set_defaults(fn=fn)

    p = sub.add_parser("verify", help="run a property suite and print a pass/fail table")
    p.add_argument("suite", choices=("lemmas", "theorem", "init"))
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except InvalidConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DrawBudgetExceededError as exc:
        print(f"draw budget exceeded: {exc}", file=sys.stderr)
        return EXIT_DRAW_BUDGET


if __name__ == "__main__":
    raise SystemExit(main())
