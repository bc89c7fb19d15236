#!/usr/bin/env python3
"""
CMC sync analyzer command line
simulate, analyze, check, optimize and report workflows writing CSV/JSON outputs
"""

import argparse
import asyncio
import logging
import re
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analyzers.criteria import evaluate_conditions, report_row
from analyzers.dist import DelayLaw, load_samples
from analyzers.propagate import (
    PathModel,
    expected_improvement,
    mse,
    multihop_mse_decomposition,
    pair_hops,
    propagate_moments,
    propagate_path,
    raw_moments,
)
from analyzers.tune import (
    MM1Model,
    default_search,
    model_paths,
    mse_curve,
    optimize_threshold,
    search_grid,
    sweep_r,
)
from config import Config
from database.models import RunManifest, RunRecord, init_database, save_run
from database.reports import (
    collect_outputs,
    read_frame,
    read_json,
    wait_file_name,
    write_frame,
    write_json,
    write_rows,
    write_samples,
)
from database.scenario import (
    ConfigError,
    ScenarioFile,
    echo_scenario,
    load_scenario,
    parse_float_list,
    parse_int_list,
    parse_scenario,
)
from protocol.cmc import Direction, nearest_cell_threshold
from protocol.sync import ROUND_COLUMNS, round_row
from simulator.filters import FilterWindow, filtered_errors, measure_rms
from simulator.network import (
    ScenarioSpec,
    pooled_queue_stats,
    replication_seeds,
    run_replications,
)

logger = logging.getLogger("cmc-sync")

MANIFEST_FILE = "manifest.json"
SUMMARY_FILE = "summary.json"
_WAIT_FILE = re.compile(r"^waits_hop(\d+)_(forward|reverse)\.csv$")


# Input resolution


def _resolve(args: argparse.Namespace, overrides: Sequence[str] = ()) -> ScenarioFile:
    overrides = list(getattr(args, "set", None) or []) + list(overrides)
    if getattr(args, "config", None):
        return load_scenario(args.config, overrides)
    if overrides:
        return parse_scenario("", overrides)
    return ScenarioFile()


def scenario_laws(spec: ScenarioSpec, pure_exponential: bool = False) -> Tuple[List[DelayLaw], List[DelayLaw]]:
    """M/M/1 waiting laws of a scenario's flows, each direction in traversal order."""
    laws = {}
    for hop, hop_spec in enumerate(spec.hops):
        for direction in Direction:
            flow = hop_spec.flow(direction)
            if flow is None:
                laws[(hop, direction)] = DelayLaw.degenerate()
            else:
                model = MM1Model(flow.mean_packet_bytes, flow.mean_interarrival_us, spec.line_rate)
                laws[(hop, direction)] = model.waiting_law(pure_exponential)
    count = len(spec.hops)
    forward = [laws[(hop, Direction.FORWARD)] for hop in range(count)]
    reverse = [laws[(hop, Direction.REVERSE)] for hop in reversed(range(count))]
    return forward, reverse


def _wait_files(directory: Path) -> Tuple[List[Path], List[Path]]:
    found: Dict[str, Dict[int, Path]] = {"forward": {}, "reverse": {}}
    for item in directory.iterdir():
        match = _WAIT_FILE.match(item.name)
        if match:
            found[match.group(2)][int(match.group(1))] = item
    hops = sorted(found["forward"])
    if not hops or hops != sorted(found["reverse"]) or hops != list(range(1, len(hops) + 1)):
        raise ConfigError(f"{directory} holds no complete set of per-hop wait files")
    return [found["forward"][h] for h in hops], [found["reverse"][h] for h in hops]


def path_laws(args: argparse.Namespace, resolved: ScenarioFile) -> Tuple[List[DelayLaw], List[DelayLaw], str]:
    """
    Per-hop laws of both directions in traversal order and a label for reports.
    Wait files are listed per switch from the client side for both directions.
    """
    analysis = resolved.analysis
    fwd_files = list(getattr(args, "waits_forward", None) or [])
    rev_files = list(getattr(args, "waits_reverse", None) or [])

    if getattr(args, "waits_dir", None):
        fwd_files, rev_files = _wait_files(Path(args.waits_dir))

    if fwd_files or rev_files:
        if len(fwd_files) != len(rev_files):
            raise ConfigError(
                f"Direction hop counts differ: {len(fwd_files)} forward vs {len(rev_files)} reverse wait files"
            )
        try:
            forward = [DelayLaw.empirical(load_samples(path)) for path in fwd_files]
            reverse = [DelayLaw.empirical(load_samples(path)) for path in reversed(rev_files)]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return forward, reverse, "empirical"

    model = getattr(args, "model", None) or analysis.model
    pure = bool(getattr(args, "pure_exponential", False)) or analysis.pure_exponential
    if model:
        hops = getattr(args, "hops", None) or analysis.model_hops
        line_rate = resolved.marking.line_rate
        try:
            forward, reverse = model_paths(model, hops, line_rate, pure)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return forward, reverse, model.upper() if model.upper() == "MI" else f"{model.upper()}x{hops}"

    if resolved.scenario is not None:
        forward, reverse = scenario_laws(resolved.scenario, pure)
        return forward, reverse, "scenario"

    raise ConfigError("No per-hop inputs: give --waits-forward/--waits-reverse, --waits-dir, --model or a scenario with flows")


def _capacity(args: argparse.Namespace, resolved: ScenarioFile) -> int:
    return getattr(args, "N", None) or resolved.analysis.capacity or resolved.marking.capacity


def _levels(args: argparse.Namespace, resolved: ScenarioFile, capacity: int) -> List[int]:
    try:
        values = parse_int_list(args.R) if getattr(args, "R", None) else list(resolved.analysis.r_values)
    except ValueError as exc:
        raise ConfigError(f"--R: {exc}") from exc
    if not values or min(values) < 1:
        raise ConfigError("--R must name level counts >= 1")
    if max(values) > capacity:
        raise ConfigError(f"levels R={max(values)} exceeds counter capacity N={capacity}")
    return values


def _delta_star(args: argparse.Namespace, resolved: ScenarioFile) -> float:
    return getattr(args, "delta_star", None) or resolved.analysis.delta_star_ns or resolved.marking.delta_star


def _search(args: argparse.Namespace, resolved: ScenarioFile, forward, reverse) -> Tuple[float, float, int]:
    default = resolved.analysis.search(default_search(forward, reverse))
    if not getattr(args, "search", None):
        return default
    try:
        lo, hi, steps = args.search.split(",")
        search = float(lo), float(hi), int(steps)
        search_grid(search)
    except ValueError as exc:
        raise ConfigError(f"--search expects lo,hi,steps: {exc}") from exc
    return search


# Bookkeeping


async def _finish(
    command: str,
    args: argparse.Namespace,
    resolved: ScenarioFile,
    out_dir: Path,
    summary: Dict[str, Any],
    started: float,
    seeds: Sequence[int] = (),
) -> None:
    await write_json(out_dir / SUMMARY_FILE, summary)
    manifest = RunManifest(
        command=command,
        scenario_path=str(args.config) if getattr(args, "config", None) else None,
        config_echo=echo_scenario(resolved),
        seeds=list(seeds),
        output_dir=str(out_dir),
        wall_clock_s=time.perf_counter() - started,
    )
    manifest.outputs = sorted(set(collect_outputs(out_dir)) | {MANIFEST_FILE})
    await write_json(out_dir / MANIFEST_FILE, manifest.to_dict())

    try:
        await init_database()
        await save_run(RunRecord(command, str(out_dir), datetime.now(), summary, manifest.scenario_path))
    except Exception as e:
        logger.warning(f"Could not record run history: {e}")

    logger.info(f"{command} finished in {manifest.wall_clock_s:.1f} s, outputs in {out_dir}")


# Commands


async def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    overrides = []
    if args.seed is not None:
        overrides.append(f"scenario.seed={args.seed}")
    if args.replications is not None:
        overrides.append(f"scenario.replications={args.replications}")
    resolved = _resolve(args, overrides)
    spec = resolved.scenario
    if spec is None:
        raise ConfigError("simulate needs a [scenario] section and at least one [flows.N] section")

    out_dir = Path(args.out)
    workers = args.workers or Config.CMC_THREADS
    loop = asyncio.get_running_loop()
    results = await loop.run_in_executor(None, run_replications, spec, workers)

    hop_count = len(spec.hops)
    wait_columns = [f"wait_fwd_hop{h + 1}" for h in range(hop_count)] + [f"wait_rev_hop{h + 1}" for h in range(hop_count)]
    rows = []
    for result in results:
        for simulated in result.rounds:
            row = round_row(simulated.sync, simulated.raw, simulated.compensated)
            for h in range(hop_count):
                row[f"wait_fwd_hop{h + 1}"] = simulated.sync.fwd_waits[h]
                row[f"wait_rev_hop{h + 1}"] = simulated.sync.rev_waits[h]
            row["replication"] = simulated.replication
            rows.append(row)
    await write_rows(out_dir / "rounds.csv", rows, ROUND_COLUMNS + wait_columns + ["replication"])

    stats = pooled_queue_stats(results)
    await write_rows(
        out_dir / "queue_stats.csv",
        [
            {
                "hop": item.hop + 1,
                "direction": item.direction,
                "rho_obs": item.rho_obs,
                "mean_wait_ns": item.mean_wait_ns,
                "drops": item.drops,
                "served": item.served,
                "mean_queue_length": item.mean_queue_length,
                "arrival_rate_per_us": item.arrival_rate_per_us,
            }
            for item in stats
        ],
        ["hop", "direction", "rho_obs", "mean_wait_ns", "drops", "served", "mean_queue_length", "arrival_rate_per_us"],
    )

    for h in range(hop_count):
        for direction in Direction:
            samples = np.concatenate([result.waits[(h, direction.value)] for result in results])
            await write_samples(out_dir / wait_file_name(h + 1, direction.value), samples)

    analysis = resolved.analysis
    eps_raw, eps_comp, filt_raw, filt_comp, filter_rows = [], [], [], [], []
    for replication, result in enumerate(results):
        if not result.rounds:
            continue
        eps_raw.extend(item.eps_raw for item in result.rounds)
        eps_comp.extend(item.eps_comp for item in result.rounds)
        window = FilterWindow(analysis.filter_kind, analysis.filter_window)
        raw_series = filtered_errors(window, result.rounds, compensated=False)
        comp_series = filtered_errors(window, result.rounds, compensated=True)
        filt_raw.extend(raw_series)
        filt_comp.extend(comp_series)
        for simulated, raw_value, comp_value in zip(result.rounds, raw_series, comp_series):
            filter_rows.append(
                {
                    "replication": replication,
                    "round": simulated.sync.index,
                    "filtered_eps_raw": raw_value,
                    "filtered_eps_comp": comp_value,
                }
            )
    await write_rows(
        out_dir / "filtered.csv", filter_rows, ["replication", "round", "filtered_eps_raw", "filtered_eps_comp"]
    )

    summary: Dict[str, Any] = {
        "rounds": len(eps_raw),
        "lost_rounds": sum(result.lost_rounds for result in results),
        "drops": sum(item.drops for item in stats),
        "delta_star_ns": spec.marking.delta_star,
        "levels": spec.marking.levels,
        "filter": analysis.filter_kind.value,
        "filter_window": analysis.filter_window,
        "negative_queuing_rounds": sum(
            simulated.compensated.negative_queuing for result in results for simulated in result.rounds
        ),
    }
    if eps_raw:
        summary["rms_raw_ns"] = measure_rms(eps_raw)
        summary["rms_comp_ns"] = measure_rms(eps_comp)
        summary["rms_ratio"] = summary["rms_comp_ns"] / summary["rms_raw_ns"] if summary["rms_raw_ns"] > 0 else None
        summary["filtered_rms_raw_ns"] = measure_rms(filt_raw)
        summary["filtered_rms_comp_ns"] = measure_rms(filt_comp)
    else:
        logger.warning("No sync round completed")

    await _finish("simulate", args, resolved, out_dir, summary, started, replication_seeds(spec.seed, spec.replications))
    return 0


def analyze_laws(
    forward: List[DelayLaw],
    reverse: List[DelayLaw],
    label: str,
    r_values: List[int],
    capacity: int,
    thresholds: Dict[int, float],
    engine: str,
) -> Tuple[Dict[str, List[Dict[str, Any]]], Dict[str, Any]]:
    mse_raw = mse(raw_moments(forward), raw_moments(reverse))
    paired = pair_hops(forward, reverse)
    per_switch, coherence = multihop_mse_decomposition(paired)
    tables: Dict[str, List[Dict[str, Any]]] = {"error_law": [], "counter_dist": [], "conditions_report": []}
    results = []

    for levels in r_values:
        delta_star = thresholds[levels]
        paths = {
            Direction.FORWARD.value: PathModel(tuple(forward), delta_star, levels, capacity),
            Direction.REVERSE.value: PathModel(tuple(reverse), delta_star, levels, capacity),
        }
        moments = {}
        for direction, path in paths.items():
            law, counters = propagate_path(path)
            moments[direction], _ = propagate_moments(path)
            frame = law.to_frame()
            tables["error_law"].extend(
                {"R": levels, "direction": direction, "bin_start_ns": start, "mass": mass}
                for start, mass in zip(frame["bin_start_ns"], frame["mass"])
                if mass > 0
            )
            tables["counter_dist"].extend(
                {"R": levels, "direction": direction, "n": n, "prob": float(p)}
                for n, p in enumerate(counters)
            )

        if engine == "histogram":
            mse_comp = float(mse_curve(forward, reverse, levels, capacity, np.array([delta_star]), engine)[0])
        else:
            mse_comp = mse(moments["forward"], moments["reverse"])
        improvement = expected_improvement(mse_comp, mse_raw) if mse_raw > 0 else 0.0
        results.append(
            {
                "levels": levels,
                "delta_star_ns": delta_star,
                "mse_comp": mse_comp,
                "improvement": improvement,
                "fwd_mean_ns": moments["forward"].mean(),
                "rev_mean_ns": moments["reverse"].mean(),
            }
        )

        for hop, (fwd_law, rev_law) in enumerate(paired, start=1):
            row = report_row(evaluate_conditions(fwd_law, rev_law, delta_star, levels), label)
            row["hop"] = hop
            tables["conditions_report"].append(row)

    best = min(results, key=lambda item: item["mse_comp"])
    summary = {
        "label": label,
        "hops": len(forward),
        "capacity": capacity,
        "mse_raw": mse_raw,
        "mse_comp": best["mse_comp"],
        "improvement": best["improvement"],
        "levels": best["levels"],
        "delta_star_ns": best["delta_star_ns"],
        "degenerate": mse_raw <= 0,
        "per_switch_mse_raw": per_switch,
        "coherence_raw_ns2": coherence,
        "results": results,
    }
    if mse_raw <= 0:
        logger.warning("Raw and compensated MSE are both zero, improvement reported as 0")
    return tables, summary


async def cmd_analyze(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    resolved = _resolve(args)
    forward, reverse, label = path_laws(args, resolved)
    if len(forward) != len(reverse):
        raise ConfigError(f"Direction hop counts differ: {len(forward)} forward vs {len(reverse)} reverse")
    capacity = _capacity(args, resolved)
    r_values = _levels(args, resolved, capacity)
    engine = getattr(args, "engine", None) or resolved.analysis.engine
    out_dir = Path(args.out)
    loop = asyncio.get_running_loop()

    sweep_rows = []
    if args.optimize or resolved.analysis.optimize:
        search = _search(args, resolved, forward, reverse)
        sweep = await loop.run_in_executor(None, sweep_r, forward, reverse, capacity, r_values, search)
        thresholds = dict(sweep.best_delta_star)
        sweep_rows = [{"R": row.levels, **row.to_dict()} for row in sweep.rows]
    else:
        delta_star = _delta_star(args, resolved)
        thresholds = {levels: delta_star for levels in r_values}

    tables, summary = await loop.run_in_executor(
        None, analyze_laws, forward, reverse, label, r_values, capacity, thresholds, engine
    )
    if not sweep_rows:
        mse_raw = summary["mse_raw"]
        sweep_rows = [
            {
                "R": item["levels"],
                "delta_star_ns": item["delta_star_ns"],
                "mse_ns2": item["mse_comp"],
                "improvement": item["improvement"] if mse_raw > 0 else 0.0,
            }
            for item in summary["results"]
        ]

    await write_rows(out_dir / "error_law.csv", tables["error_law"], ["R", "direction", "bin_start_ns", "mass"])
    await write_rows(out_dir / "counter_dist.csv", tables["counter_dist"], ["R", "direction", "n", "prob"])
    await write_rows(out_dir / "sweep.csv", sweep_rows, ["R", "delta_star_ns", "mse_ns2", "improvement"])
    await write_rows(out_dir / "conditions_report.csv", tables["conditions_report"])

    await _finish("analyze", args, resolved, out_dir, summary, started)
    return 0


async def cmd_check(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    resolved = _resolve(args)
    forward, reverse, label = path_laws(args, resolved)
    try:
        paired = pair_hops(forward, reverse)
        r_values = parse_int_list(args.R) if args.R else list(resolved.analysis.r_values)
        thresholds = parse_float_list(args.thresholds) if args.thresholds else list(resolved.analysis.thresholds_ns)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not thresholds:
        thresholds = [_delta_star(args, resolved)]
    if any(value <= 0 for value in thresholds) or not r_values or min(r_values) < 1:
        raise ConfigError("Thresholds must be positive and level counts >= 1")

    rows = []
    for levels in r_values:
        for delta_star in thresholds:
            for hop, (fwd_law, rev_law) in enumerate(paired, start=1):
                row = report_row(evaluate_conditions(fwd_law, rev_law, delta_star, levels), label)
                row["hop"] = hop
                rows.append(row)
    await write_rows(Path(args.out) / "conditions_report.csv", rows)

    summary = {
        "label": label,
        "rows": len(rows),
        "c1_holds": sum(row["c1_holds"] for row in rows),
        "c2_holds": sum(row["c2_holds"] for row in rows),
        "c3_holds": sum(row["c3_holds"] for row in rows),
        "a1_regime": any(row["a1_regime"] for row in rows),
    }
    await _finish("check", args, resolved, Path(args.out), summary, started)
    return 0


async def cmd_optimize(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    resolved = _resolve(args)
    forward, reverse, label = path_laws(args, resolved)
    capacity = _capacity(args, resolved)
    r_values = _levels(args, resolved, capacity)
    search = _search(args, resolved, forward, reverse)
    engine = getattr(args, "engine", None) or resolved.analysis.engine
    line_rate = resolved.marking.line_rate
    mse_raw = mse(raw_moments(forward), raw_moments(reverse))
    loop = asyncio.get_running_loop()

    rows = []
    for levels in r_values:
        delta_star, best = await loop.run_in_executor(
            None, optimize_threshold, forward, reverse, levels, capacity, search, engine
        )
        exponent, cell_bytes, cell_delta = nearest_cell_threshold(delta_star, line_rate)
        rows.append(
            {
                "R": levels,
                "delta_star_ns": delta_star,
                "mse_ns2": best,
                "improvement": expected_improvement(best, mse_raw) if mse_raw > 0 else 0.0,
                "threshold_bytes": delta_star * line_rate / 8e9,
                "cell_exponent": exponent,
                "cell_threshold_bytes": cell_bytes,
                "cell_delta_star_ns": cell_delta,
            }
        )
    out_dir = Path(args.out)
    await write_rows(out_dir / "optimum.csv", rows)

    best_row = min(rows, key=lambda item: item["mse_ns2"])
    summary = {
        "label": label,
        "capacity": capacity,
        "mse_raw": mse_raw,
        "search": list(search),
        "engine": engine,
        "best": best_row,
    }
    await _finish("optimize", args, resolved, out_dir, summary, started)
    return 0


async def cmd_report(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    rows, series = [], []
    for directory in args.inputs:
        directory = Path(directory)
        manifest = read_json(directory / MANIFEST_FILE)
        summary = read_json(directory / SUMMARY_FILE)
        row = {"source": str(directory), "command": manifest.get("command")}
        row.update({key: value for key, value in summary.items() if not isinstance(value, (list, dict))})
        rows.append(row)
        for name in ("sweep.csv", "optimum.csv"):
            path = directory / name
            if path.exists():
                frame = read_frame(path)
                frame.insert(0, "source", str(directory))
                frame.insert(1, "table", name[: -len(".csv")])
                series.append(frame)

    out_dir = Path(args.out)
    await write_frame(out_dir / "report.csv", pd.DataFrame(rows))
    if series:
        await write_frame(out_dir / "report_series.csv", pd.concat(series, ignore_index=True, sort=False))

    summary = {"inputs": [str(item) for item in args.inputs], "rows": len(rows)}
    await _finish("report", args, ScenarioFile(), out_dir, summary, started)
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], Any]] = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "check": cmd_check,
    "optimize": cmd_optimize,
    "report": cmd_report,
}


def _add_law_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", nargs="?", help="Scenario file")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="Override a scenario value")
    parser.add_argument("--waits-forward", nargs="+", metavar="FILE", help="Forward wait samples per switch")
    parser.add_argument("--waits-reverse", nargs="+", metavar="FILE", help="Reverse wait samples per switch")
    parser.add_argument("--waits-dir", help="Directory with waits_hopX_dir.csv files from a simulation")
    parser.add_argument("--model", help="Flow pattern for M/M/1 laws (SF, LM, SM, SS or MI)")
    parser.add_argument("--hops", type=int, help="Number of hops for a single-pattern model")
    parser.add_argument("--pure-exponential", action="store_true", help="Drop the zero-delay atom from model laws")
    parser.add_argument("--R", help="Level counts, e.g. 1..16 or 1,2,4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmc-sync", description="Congestion marking clock synchronization toolkit")
    parser.add_argument("--log-level", default=None, help="Logging level (defaults to LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Run the network simulator")
    simulate.add_argument("config", help="Scenario file")
    simulate.add_argument("--out", required=True, help="Output directory")
    simulate.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="Override a scenario value")
    simulate.add_argument("--seed", type=int, help="Base seed")
    simulate.add_argument("--replications", type=int, help="Number of replications")
    simulate.add_argument("--workers", type=int, help="Worker processes (defaults to CMC_THREADS)")

    analyze = subparsers.add_parser("analyze", help="Predict the corrected error law")
    _add_law_inputs(analyze)
    analyze.add_argument("--N", type=int, help="Counter capacity")
    analyze.add_argument("--delta-star", type=float, help="Threshold delay in ns")
    analyze.add_argument("--optimize", action="store_true", help="Optimize the threshold for every R")
    analyze.add_argument("--search", help="Threshold search lo,hi,steps in ns")
    analyze.add_argument("--engine", choices=["moments", "histogram"], help="MSE engine")

    check = subparsers.add_parser("check", help="Evaluate improvement conditions")
    _add_law_inputs(check)
    check.add_argument("--thresholds", help="Comma separated thresholds in ns")
    check.add_argument("--delta-star", type=float, help="Threshold delay in ns when --thresholds is absent")

    optimize = subparsers.add_parser("optimize", help="Optimize the marking threshold")
    _add_law_inputs(optimize)
    optimize.add_argument("--N", type=int, help="Counter capacity")
    optimize.add_argument("--search", help="Threshold search lo,hi,steps in ns")
    optimize.add_argument("--engine", choices=["moments", "histogram"], help="MSE engine")

    report = subparsers.add_parser("report", help="Merge earlier outputs into one table")
    report.add_argument("inputs", nargs="+", help="Output directories of earlier commands")
    report.add_argument("--out", required=True, help="Output directory")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=(args.log_level or Config.LOG_LEVEL).upper())
    Config.validate()

    try:
        return asyncio.run(COMMANDS[args.command](args))
    except (ConfigError, FileNotFoundError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
