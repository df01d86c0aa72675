"""Command-line entry point: ``mobysim {generate,stats,simulate,experiment,report}``."""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import ConfigError, load_config, parse_duration, with_overrides
from .engine import (ExperimentConfig, draw_sample, learning_experiment, pattern_table, run_experiment,
                     run_simulation, scenarios)
from .metrics import aggregate, read_results_csv
from .routing import POLICIES
from .trace import (DAY, SyntheticConfig, TraceFormatError, generate_synthetic, read_sessions,
                    trace_statistics, write_sessions, write_stats)

USAGE_ERROR = 2


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="mobysim", description="Trace-driven DTN routing simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic session trace", formatter_class=fmt)
    g.add_argument("--nodes", type=int, default=200, help="number of nodes")
    g.add_argument("--locations", type=int, default=50, help="number of locations")
    g.add_argument("--days", type=float, default=45, help="trace length in days")
    g.add_argument("--zipf", type=float, default=2.0, help="location preference exponent")
    g.add_argument("--mean-session", default="2h", help="mean session duration (s/m/h/d suffix)")
    g.add_argument("--sessions-per-day", type=float, default=4.0, help="mean arrivals per node per day")
    g.add_argument("--activity-spread", type=float, default=0.0,
                   help="log-normal sigma of per-node activity")
    g.add_argument("--diurnal", action="store_true", help="enable a day/night activity cycle")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--out", required=True, help="output session CSV")

    s = sub.add_parser("stats", help="descriptive statistics of a trace", formatter_class=fmt)
    s.add_argument("trace", help="session CSV")
    s.add_argument("--out", required=True, help="output directory")

    for name, helptext in (("simulate", "a single paired run"), ("experiment", "a multi-run experiment")):
        e = sub.add_parser(name, help=helptext, formatter_class=fmt)
        e.add_argument("--config", required=True, help="key = value config file")
        e.add_argument("--trace", default=None, help="session CSV (overrides the config's trace)")
        e.add_argument("--policy", action="append", choices=sorted(POLICIES), default=None,
                       help="policy to run; repeat for several (overrides the config)")
        e.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        e.add_argument("--out", required=True, help="output directory")
        if name == "simulate":
            e.add_argument("--run", type=int, default=0, help="run index to reproduce")
        else:
            e.add_argument("--kind", default=None,
                           choices=["standard", "most-active", "entropy-bins", "reduction", "learning"],
                           help="experiment kind (overrides the config)")
            e.add_argument("--runs", type=int, default=None, help="number of runs (overrides the config)")
            e.add_argument("--jobs", type=int, default=1, help="parallel simulations")

    r = sub.add_parser("report", help="print results as a table", formatter_class=fmt)
    r.add_argument("results", help="directory written by 'experiment' or 'simulate'")
    return p


def _load(args) -> tuple[ExperimentConfig, str]:
    try:
        loaded = load_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    cfg = loaded.experiment
    overrides = {"seed": args.seed}
    if args.policy:
        overrides["policies"] = tuple(dict.fromkeys(args.policy))
    if getattr(args, "kind", None):
        overrides["experiment"] = args.kind
    if getattr(args, "runs", None):
        overrides["runs"] = args.runs
    try:
        cfg = with_overrides(cfg, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace = args.trace or loaded.trace
    if not trace:
        raise UsageError("no trace given: set 'trace = PATH' in the config or pass --trace")
    if not os.path.exists(trace):
        raise UsageError(f"trace file not found: {trace}")
    return cfg, trace


def cmd_generate(args) -> None:
    cfg = SyntheticConfig(
        node_count=args.nodes, location_count=args.locations, duration=int(round(args.days * DAY)),
        zipf_exponent=args.zipf, mean_session_duration=parse_duration(args.mean_session),
        sessions_per_day=args.sessions_per_day, diurnal=args.diurnal, seed=args.seed,
        activity_spread=args.activity_spread,
    )
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    trace = generate_synthetic(cfg)
    write_sessions(trace, args.out)
    print(f"{len(trace)} sessions, {cfg.node_count} nodes, {cfg.location_count} locations -> {args.out}")


def cmd_stats(args) -> None:
    if not os.path.exists(args.trace):
        raise UsageError(f"trace file not found: {args.trace}")
    trace = read_sessions(args.trace)
    stats = trace_statistics(trace)
    os.makedirs(args.out, exist_ok=True)
    write_stats(stats, os.path.join(args.out, "node_stats.csv"), os.path.join(args.out, "day_stats.csv"), trace)
    print(f"users {stats.active_users}, locations {trace.location_count}, days {len(trace.days)}")
    for key, value in stats.summary().items():
        print(f"{key} {value:.4g}")
    if trace.report.normalized or trace.report.rejected:
        print(f"normalized overlaps {trace.report.normalized}, rejected lines {trace.report.rejected}")


def cmd_simulate(args) -> None:
    cfg, trace_path = _load(args)
    trace = read_sessions(trace_path)
    if cfg.run.duration > trace.span[1] - trace.span[0]:
        raise UsageError(f"duration {cfg.run.duration}s exceeds the trace span; set 'duration' in the config")
    group = scenarios(cfg)[0]
    seed, sampled, bundles = draw_sample(trace, cfg, group, args.run)
    policies = cfg.policies or (cfg.run.policy,)
    os.makedirs(args.out, exist_ok=True)
    runs = {}
    with open(os.path.join(args.out, "bundles.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "bundle_id", "source", "destination", "created_at", "delivered_at", "hops"])
        for policy in policies:
            patterns = pattern_table(trace, cfg.run.pattern_window, group.truncation) if policy == "mobyspace" else None
            res = run_simulation(trace, sampled, bundles, policy, cfg.run, patterns=patterns, seed=seed)
            runs[policy] = [res]
            for o in res.outcomes:
                b = o.bundle
                w.writerow([policy, b.id, trace.node_labels[b.source], trace.node_labels[b.destination],
                            b.created_at, "" if o.delivered_at is None else o.delivered_at,
                            "" if o.hops is None else o.hops])
    result = aggregate({group.label: runs}, level=cfg.level, cdf_bins=cfg.cdf_bins, horizon=cfg.run.duration)
    result.write_csv(os.path.join(args.out, "results.csv"))
    result.write_cdf_csv(os.path.join(args.out, "cdf.csv"))
    print(_table(read_results_csv(os.path.join(args.out, "results.csv"))))


def cmd_experiment(args) -> None:
    cfg, trace_path = _load(args)
    trace = read_sessions(trace_path)
    os.makedirs(args.out, exist_ok=True)
    if cfg.experiment == "learning":
        points = learning_experiment(trace, cfg.learning_days, cfg.routing_days)
        path = os.path.join(args.out, "learning.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["learning_days", "mean_error", "mean_error_most_active", "nodes", "most_active_nodes"])
            for p in points:
                w.writerow([p.days, f"{p.mean_error:.10g}", f"{p.mean_error_most_active:.10g}",
                            p.nodes, p.most_active_nodes])
        print(_learning_table(read_results_csv(path)))
        return
    if cfg.run.duration > trace.span[1] - trace.span[0]:
        raise UsageError(f"duration {cfg.run.duration}s exceeds the trace span; set 'duration' in the config")
    result = run_experiment(trace, cfg, jobs=max(1, args.jobs))
    result.write_csv(os.path.join(args.out, "results.csv"))
    result.write_cdf_csv(os.path.join(args.out, "cdf.csv"))
    print(_table(read_results_csv(os.path.join(args.out, "results.csv"))))


def _table(rows: list[dict[str, str]]) -> str:
    cells: dict[tuple[str, str], dict[str, str]] = {}
    for r in rows:
        mean = r["mean"]
        text = "-" if not mean else f"{float(mean):.3g}"
        if mean and r["half_width"]:
            text += f" ± {float(r['half_width']):.2g}"
        cells.setdefault((r["group"], r["policy"]), {})[r["metric"]] = text
    head = ["group", "policy", "delivery ratio (%)", "delay (days)", "route length (hops)"]
    body = [[g, p, m.get("delivery_ratio", "-"), m.get("delay_days", "-"), m.get("route_length", "-")]
            for (g, p), m in cells.items()]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(row, widths)) for row in [head, *body]]
    return "\n".join(lines)


def _learning_table(rows: list[dict[str, str]]) -> str:
    lines = ["days  error(all)  error(most active)"]
    for r in rows:
        lines.append(f"{r['learning_days']:>4}  {float(r['mean_error']):.4f}      {float(r['mean_error_most_active']):.4f}")
    return "\n".join(lines)


def cmd_report(args) -> None:
    results = os.path.join(args.results, "results.csv")
    learning = os.path.join(args.results, "learning.csv")
    if os.path.exists(results):
        print(_table(read_results_csv(results)))
    elif os.path.exists(learning):
        print(_learning_table(read_results_csv(learning)))
    else:
        raise UsageError(f"no results.csv or learning.csv in {args.results}")


COMMANDS = {
    "generate": cmd_generate,
    "stats": cmd_stats,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError, TraceFormatError) as exc:
        print(f"mobysim {args.command}: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"mobysim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
