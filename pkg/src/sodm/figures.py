"""Render machine-readable reports into matplotlib figures.

Every report the CLI writes (training levels, SVRG epochs, bound trials,
bench timings) can be turned into PNG files that land alongside the
delimited output. Rendering is opt-in via ``--figures DIR`` or the ``plot``
subcommand; the data files stay the source of truth.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_levels(records, out_dir):
    levels = [r["level"] for r in records]
    written = []
    with plt.rc_context(_STYLE):
        objective = [r["global_objective"] for r in records]
        if any(v is not None for v in objective):
            fig, ax = plt.subplots()
            xs = [l for l, v in zip(levels, objective) if v is not None]
            ys = [v for v in objective if v is not None]
            ax.plot(xs, ys, marker="o")
            ax.invert_xaxis()  # training proceeds from level L down to 0
            ax.set_xlabel("level")
            ax.set_ylabel("global dual objective")
            ax.set_title("objective of the concatenated solution per level")
            written.append(_save(fig, out_dir, "levels_objective.png"))
        fig, ax = plt.subplots()
        totals = [sum(r["epochs"]) for r in records]
        ax.bar([str(l) for l in levels], totals)
        ax.set_xlabel("level")
        ax.set_ylabel("total local epochs")
        ax.set_title("solver work per level")
        written.append(_save(fig, out_dir, "levels_epochs.png"))
    return written


def plot_epochs(records, out_dir):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(
            [r["epoch"] for r in records],
            [r["primal_objective"] for r in records],
            marker="o",
        )
        ax.set_xlabel("epoch")
        ax.set_ylabel("primal objective")
        ax.set_title("variance-reduced training trajectory")
        return [_save(fig, out_dir, "svrg_trajectory.png")]


def plot_trials(records, out_dir):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for theorem, marker in ((1, "o"), (2, "s")):
            sub = [r for r in records if r.get("theorem") == theorem and not r["skipped"]]
            if not sub:
                continue
            ax.scatter(
                [max(r["gap_lhs"], 1e-300) for r in sub],
                [max(r["gap_rhs"], 1e-300) for r in sub],
                s=14,
                marker=marker,
                label="bound %d" % theorem,
            )
        lims = ax.get_xlim() + ax.get_ylim()
        lo, hi = min(lims), max(lims)
        ax.plot([lo, hi], [lo, hi], color="gray", linewidth=0.8, label="lhs = rhs")
        ax.set_xscale("symlog", linthresh=1e-6)
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.set_xlabel("observed gap")
        ax.set_ylabel("bound")
        ax.set_title("bound verification trials")
        ax.legend()
        return [_save(fig, out_dir, "bound_trials.png")]


def plot_bench(record, out_dir):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(record["workers"], record["speedup"], marker="o")
        ax.set_xlabel("workers")
        ax.set_ylabel("speedup over first entry")
        ax.set_title("training speedup")
        return [_save(fig, out_dir, "bench_speedup.png")]


def render_report(report_path, out_dir):
    """Dispatch a report file to the matching figure; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    with open(report_path, encoding="utf-8") as fh:
        text = fh.read().strip()
    if not text:
        return []
    records = [json.loads(line) for line in text.splitlines()]
    if len(records) == 1 and "workers" in records[0]:
        return plot_bench(records[0], out_dir)
    by_type = records[0].get("type")
    if by_type == "level":
        return plot_levels([r for r in records if r.get("type") == "level"], out_dir)
    if by_type == "epoch":
        return plot_epochs([r for r in records if r.get("type") == "epoch"], out_dir)
    if by_type == "trial":
        return plot_trials([r for r in records if r.get("type") == "trial"], out_dir)
    raise ValueError("unrecognized report format in %s" % report_path)
