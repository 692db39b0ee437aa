"""Command-line entry point: ``omas-topology <command>``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import io
from .clustering import MissingModeCountError
from .pipeline import PipelineReport, estimate_from_labels, run_two_stage
from .preset import gen_paper_preset
from .simulator import DivergenceError, ScenarioValidationError, simulate_scenario

EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3

log = logging.getLogger("omas_topology")


def _scenario_for(segments_dir, override):
    path = Path(override) if override else Path(segments_dir) / "scenario.json"
    if not path.exists():
        raise io.ScenarioFileError(f"{path} not found; pass --scenario")
    return io.load_scenario(path)


def _simulate_to(scenario, out, log_trajectory=False, log_stride=1):
    out.mkdir(parents=True, exist_ok=True)
    io.save_scenario(scenario, out / "scenario.json")
    result = simulate_scenario(scenario, log_trajectory=log_trajectory, log_stride=log_stride)
    io.write_segments(result.records, out / "segments.jsonl")
    if log_trajectory:
        io.write_trajectory(result.trajectory, out / "trajectory.csv")
    return result


def cmd_gen_scenario(args):
    if args.preset != "paper":
        raise io.ScenarioFileError(f"unknown preset {args.preset!r}")
    io.save_scenario(gen_paper_preset(args.seed), args.out)
    print(f"wrote {args.out}")


def cmd_simulate(args):
    scenario = io.load_scenario(args.scenario)
    result = _simulate_to(scenario, Path(args.out), args.log_trajectory, args.log_stride)
    crossed = sum(r.interval_estimate is not None for r in result.records)
    print(f"{len(result.records)} segments, {crossed} with a per-interval estimate -> {args.out}")


def cmd_cluster(args):
    scenario = _scenario_for(args.segments, args.scenario)
    records = io.read_segments(args.segments)
    report = run_two_stage(records, scenario.mode_counts, scenario.gamma, scenario.rank_tol, scenario.mode_table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    asg = report.assignment
    for gid, dm in asg.distances.items():
        io.write_distances(dm, out / f"distances_{gid}.csv")
        io.write_dendrogram(asg.merge_history[gid], out / f"dendrogram_{gid}.json")
    io.write_labels(report.labels, asg.groups, out / "labels.csv")
    for gid, acc in report.per_group_accuracy.items():
        print(f"{gid}: accuracy {acc:.3f}")


def cmd_estimate(args):
    scenario = _scenario_for(args.segments, args.scenario)
    records = io.read_segments(args.segments)
    labels = io.read_labels(args.labels)
    estimates = estimate_from_labels(records, labels, scenario.gamma, scenario.mode_table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_estimates(estimates, out / "estimates.json")
    for e in estimates:
        err = "n/a" if e.error_vs_truth is None else f"{e.error_vs_truth:.3e}"
        print(f"label {e.mode_label}: {len(e.contributing_segments)} segments, error {err}")


def cmd_run(args):
    scenario = io.load_scenario(args.scenario)
    out = Path(args.out)
    t0 = time.perf_counter()
    result = _simulate_to(scenario, out, args.log_trajectory, args.log_stride)
    t1 = time.perf_counter()
    report = run_two_stage(
        result.records, scenario.mode_counts, scenario.gamma, scenario.rank_tol, scenario.mode_table
    )
    report.timing["simulate_s"] = t1 - t0
    report.diagnostics["intervals"] = [asdict(d) for d in result.diagnostics]
    io.save_report(report, out)
    _summary(report)


def _summary(report: PipelineReport):
    for gid, acc in report.per_group_accuracy.items():
        print(f"{gid}: clustering accuracy {acc:.3f}")
    for e in report.estimates:
        err = "n/a" if e.error_vs_truth is None else f"{e.error_vs_truth:.3e}"
        print(f"label {e.mode_label} (true mode {e.true_mode}): error {err}")
    for lab in report.diagnostics["under_excited_clusters"]:
        print(f"label {lab}: under-excited, no estimate")


def cmd_acceptance(args):
    from .acceptance import run_all

    results = run_all(verbose=True)
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="omas-topology", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="write a generated scenario file")
    g.add_argument("--preset", default="paper")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scenario)

    for name, func in (("simulate", cmd_simulate), ("run", cmd_run)):
        s = sub.add_parser(name, help="simulate" if name == "simulate" else "full two-stage pipeline")
        s.add_argument("--scenario", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--log-trajectory", action="store_true")
        s.add_argument("--log-stride", type=int, default=1, help="keep every k-th grid point")
        s.set_defaults(func=func)

    c = sub.add_parser("cluster", help="cluster segments into modes")
    c.add_argument("--segments", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--scenario", help="defaults to <segments>/scenario.json")
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("estimate", help="aggregate labelled segments")
    e.add_argument("--segments", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--scenario", help="defaults to <segments>/scenario.json")
    e.set_defaults(func=cmd_estimate)

    a = sub.add_parser("acceptance", help="run the acceptance checks")
    a.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args) or 0
    except (io.ScenarioFileError, ScenarioValidationError, MissingModeCountError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
