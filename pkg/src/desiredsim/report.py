"""Post-run reporting: comparison tables, seed aggregates, figures.

Every run directory is self-describing (summary.json plus the CSV logs), so
reporting never needs the simulator.  Figures are rendered to PNG files next
to the delimited output; nothing opens a display.
"""

import csv
import json
import os
from statistics import mean, pstdev

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .dash import VIDEO_CATALOG  # noqa: E402
from .qnet import ensemble_average, load_snapshot, save_snapshot  # noqa: E402

QOS_KEYS = ("rebuffering_pct", "mean_fps", "mean_lbo_s")


def load_summary(run_dir: str) -> dict:
    path = os.path.join(run_dir, "summary.json")
    with open(path) as fh:
        summary = json.load(fh)
    for key in ("name", "mode", "qos"):
        if key not in summary:
            raise ValueError(f"{path} is missing {key!r}")
    return summary


def _ratio(value: float, base: float) -> float:
    if base == 0.0:
        return 1.0 if value == 0.0 else float("inf")
    return value / base


def flat_row(summary: dict) -> dict:
    qos = summary["qos"]
    shares = qos["shares_pct"]
    row = {
        "name": summary["name"],
        "mode": summary["mode"],
        "load": summary.get("load", ""),
        "seed": summary.get("seed", ""),
        "target_ms": summary.get("target_ms", ""),
        "rebuffering_pct": qos["rebuffering_pct"],
        "mean_fps": qos["mean_fps"],
        "mean_lbo_s": qos["mean_lbo_s"],
        "goodput_mbps": summary["network"]["measured_goodput_mbps"],
    }
    for rep in VIDEO_CATALOG:
        row[f"share_{rep.label}_pct"] = shares[rep.label]
    return row


def comparison_rows(summaries, baseline_name=None):
    """Flatten summaries and add ratio columns against the baseline run."""
    rows = [flat_row(s) for s in summaries]
    if baseline_name is None:
        baseline_name = rows[0]["name"]
    base = next((r for r in rows if r["name"] == baseline_name), None)
    if base is None:
        raise ValueError(f"baseline {baseline_name!r} not among runs")
    for row in rows:
        for key in QOS_KEYS + ("goodput_mbps",):
            row[f"{key}_vs_base"] = round(_ratio(row[key], base[key]), 6)
    return rows


def write_rows_csv(path, rows) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)


def aggregate_seeds(summaries):
    """Group per-seed runs by arm name prefix and report mean/stddev."""
    groups = {}
    for s in summaries:
        groups.setdefault(s["name"].rsplit("-s", 1)[0], []).append(flat_row(s))
    out = []
    for arm in sorted(groups):
        rows = groups[arm]
        agg = {"name": arm, "runs": len(rows)}
        for key in QOS_KEYS + ("goodput_mbps",) + tuple(
                f"share_{rep.label}_pct" for rep in VIDEO_CATALOG):
            vals = [r[key] for r in rows]
            agg[f"{key}_mean"] = round(mean(vals), 6)
            agg[f"{key}_std"] = round(pstdev(vals), 6)
        out.append(agg)
    return out


def fold_ensemble(snapshot_paths, out_path, alpha: float = 0.5) -> None:
    """Average per-seed parameter snapshots into one ensemble snapshot."""
    if not snapshot_paths:
        raise ValueError("no parameter snapshots to fold")
    nets = [load_snapshot(p) for p in snapshot_paths]
    folded = nets[0].parameters()
    for net in nets[1:]:
        folded = ensemble_average(folded, net.parameters(), alpha)
    nets[0].set_parameters(folded)
    save_snapshot(out_path, nets[0])


# -- figures ----------------------------------------------------------------

def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _column(header, rows, name, cast=float):
    i = header.index(name)
    return [cast(r[i]) for r in rows]


def render_run_figures(run_dir: str, out_dir=None):
    """Render per-run figures; returns the list of files written."""
    out_dir = out_dir or os.path.join(run_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    header, rows = _read_csv(os.path.join(run_dir, "player_metrics.csv"))
    t = _column(header, rows, "t_s")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(t, _column(header, rows, "lbo_s"), lw=0.8)
    ax1.set_ylabel("buffer (s)")
    ax2.plot(t, _column(header, rows, "fps"), lw=0.8)
    ax2.set_ylabel("fps")
    ax2.set_xlabel("time (s)")
    fig.tight_layout()
    path = os.path.join(out_dir, "player.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    header, rows = _read_csv(os.path.join(run_dir, "load_trace.csv"))
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.step(_column(header, rows, "t_s"), _column(header, rows, "instances"),
            where="post", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("load clients")
    fig.tight_layout()
    path = os.path.join(out_dir, "load.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    agent_csv = os.path.join(run_dir, "agent_log.csv")
    if os.path.exists(agent_csv):
        header, rows = _read_csv(agent_csv)
        t = _column(header, rows, "t_s")
        fig, (ax1, ax2, ax3) = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
        ax1.step(t, [v / 1000.0 for v in _column(header, rows, "target_us")],
                 where="post", lw=0.8)
        ax1.set_ylabel("target (ms)")
        rew = [(tt, float(v)) for tt, v in
               zip(t, _column(header, rows, "reward", cast=str)) if v != ""]
        ax2.plot([p[0] for p in rew], [p[1] for p in rew], ".", ms=3)
        ax2.set_ylabel("reward")
        loss = [(tt, float(v)) for tt, v in
                zip(t, _column(header, rows, "loss", cast=str)) if v != ""]
        if loss:
            ax3.semilogy([p[0] for p in loss], [p[1] for p in loss], lw=0.8)
        ax3.set_ylabel("loss")
        ax3.set_xlabel("time (s)")
        fig.tight_layout()
        path = os.path.join(out_dir, "agent.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_compare_figure(summaries, out_path: str) -> str:
    """Side-by-side QoS bars: resolution shares stacked, rebuffering points."""
    names = [s["name"] for s in summaries]
    x = range(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    bottom = [0.0] * len(names)
    for rep in VIDEO_CATALOG:
        vals = [s["qos"]["shares_pct"][rep.label] for s in summaries]
        ax1.bar(x, vals, bottom=bottom, label=rep.label)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax1.set_xticks(list(x))
    ax1.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("playback share (%)")
    ax1.legend(fontsize=8)
    ax2.bar(x, [s["qos"]["rebuffering_pct"] for s in summaries])
    ax2.set_xticks(list(x))
    ax2.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("rebuffering (%)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
