"""Command line front end.

    desiredsim run      one arm -> run directory with CSV logs + summary.json
    desiredsim batch    same arm across seeds -> aggregate table + ensemble
    desiredsim compare  summaries side by side -> comparison.csv (+ figure)
    desiredsim report   figures + comparison for existing run directories

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""

import argparse
import dataclasses
import os
import sys

from .config import ConfigError, load_yaml, make_config
from .report import (aggregate_seeds, comparison_rows, fold_ensemble,
                     load_summary, render_compare_figure, render_run_figures,
                     write_rows_csv)
from .scenario import run_experiment

_CFG_FLAGS = (
    ("--name", str, "name"),
    ("--mode", str, "mode"),
    ("--target-ms", float, "target_ms"),
    ("--initial-target-ms", float, "initial_target_ms"),
    ("--load", str, "load"),
    ("--duration-s", int, "duration_s"),
    ("--seed", int, "seed"),
    ("--outdir", str, "outdir"),
    ("--tau", int, "tau"),
    ("--min-fill", int, "min_fill"),
    ("--decay-steps", int, "decay_steps"),
)
_CFG_SWITCHES = (
    ("--ecn-dash", "ecn_dash"),
    ("--telemetry-dump", "telemetry_dump"),
    ("--aqm-trace", "aqm_trace"),
)


def _add_config_args(sub) -> None:
    sub.add_argument("--config", help="YAML config file")
    sub.add_argument("--preset", default="full", help="full or desk")
    for flag, typ, _ in _CFG_FLAGS:
        sub.add_argument(flag, type=typ, default=None)
    for flag, _ in _CFG_SWITCHES:
        sub.add_argument(flag, action="store_true", default=None)


def _build_config(args):
    overrides = {}
    for _, _, key in _CFG_FLAGS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    for _, key in _CFG_SWITCHES:
        if getattr(args, key):
            overrides[key] = True
    if args.config:
        cfg = load_yaml(args.config)
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        return cfg.validate()
    return make_config(args.preset, **overrides)


def _print_summary_line(summary) -> None:
    qos = summary["qos"]
    shares = "/".join(f"{v:.1f}" for v in qos["shares_pct"].values())
    print(f"{summary['name']}: rebuffering {qos['rebuffering_pct']:.2f}%  "
          f"mean fps {qos['mean_fps']:.2f}  shares {shares}%  "
          f"goodput {summary['network']['measured_goodput_mbps']:.3f} Mb/s")


def cmd_run(args) -> int:
    cfg = _build_config(args)
    run_dir = os.path.join(cfg.outdir, cfg.name)
    summary = run_experiment(cfg)
    _print_summary_line(summary)
    if args.figures:
        for path in render_run_figures(run_dir):
            print(f"wrote {path}")
    print(f"wrote {run_dir}")
    return 0


def cmd_batch(args) -> int:
    base = _build_config(args)
    summaries = []
    run_dirs = []
    for seed in args.seeds:
        cfg = dataclasses.replace(base, seed=seed, name=f"{base.name}-s{seed}")
        summaries.append(run_experiment(cfg))
        run_dirs.append(os.path.join(cfg.outdir, cfg.name))
        _print_summary_line(summaries[-1])
    os.makedirs(base.outdir, exist_ok=True)
    agg = aggregate_seeds(summaries)
    agg_path = os.path.join(base.outdir, f"{base.name}-aggregate.csv")
    write_rows_csv(agg_path, agg)
    print(f"wrote {agg_path}")
    if base.mode == "dynamic":
        snaps = [os.path.join(d, "params.npz") for d in run_dirs]
        ens_path = os.path.join(base.outdir, f"{base.name}-ensemble.npz")
        fold_ensemble(snaps, ens_path, base.ensemble_alpha)
        print(f"wrote {ens_path}")
    return 0


def _table(rows, keys) -> str:
    widths = {k: max(len(k), *(len(f"{r[k]}") for r in rows)) for k in keys}
    lines = ["  ".join(k.ljust(widths[k]) for k in keys)]
    for r in rows:
        lines.append("  ".join(f"{r[k]}".ljust(widths[k]) for k in keys))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    summaries = [load_summary(d) for d in args.run_dirs]
    rows = comparison_rows(summaries, args.baseline)
    for row in rows:
        for k, v in list(row.items()):
            if isinstance(v, float):
                row[k] = round(v, 4)
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "comparison.csv")
    write_rows_csv(out_csv, rows)
    print(_table(rows, ["name", "mode", "rebuffering_pct", "mean_fps",
                        "goodput_mbps", "rebuffering_pct_vs_base"]))
    print(f"wrote {out_csv}")
    if args.figures:
        path = render_compare_figure(summaries, os.path.join(args.out, "qos.png"))
        print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    summaries = []
    for d in args.run_dirs:
        summaries.append(load_summary(d))
        for path in render_run_figures(d):
            print(f"wrote {path}")
    os.makedirs(args.out, exist_ok=True)
    rows = comparison_rows(summaries)
    out_csv = os.path.join(args.out, "comparison.csv")
    write_rows_csv(out_csv, rows)
    render_compare_figure(summaries, os.path.join(args.out, "qos.png"))
    print(f"wrote {out_csv} and {os.path.join(args.out, 'qos.png')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="desiredsim",
        description="AQM target tuning experiments on a dumbbell topology")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment arm")
    _add_config_args(p_run)
    p_run.add_argument("--figures", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="run one arm across seeds")
    _add_config_args(p_batch)
    p_batch.add_argument("--seeds", type=int, nargs="+", required=True)
    p_batch.set_defaults(func=cmd_batch)

    p_cmp = sub.add_parser("compare", help="compare finished runs")
    p_cmp.add_argument("run_dirs", nargs="+")
    p_cmp.add_argument("--baseline", default=None,
                       help="run name to normalize against (default: first)")
    p_cmp.add_argument("--out", default="report")
    p_cmp.add_argument("--figures", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("report", help="figures + comparison for runs")
    p_rep.add_argument("run_dirs", nargs="+")
    p_rep.add_argument("--out", default="report")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a genuine runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
