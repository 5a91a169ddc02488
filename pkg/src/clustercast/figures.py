"""Render report figures from the delimited outputs of a run.

Everything here is downstream of the CSV artifacts: the raw per-seed rows
feed box plots, the aggregate rows feed mean-RMSE bar charts, and the
prediction / transfer-trace files feed overlay plots. Figures land in a
figures/ subdirectory of the run output as PNG files.
"""

from __future__ import annotations

import csv
import glob
import os
import re

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RAW_RUNS, aggregate, read_raw_runs


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _model_order(models: set[str]) -> list[str]:
    # merged first, then per-cluster, then blended, grouped by kind
    rank = {"merged": 0, "percluster": 1, "blended": 2}
    return sorted(models, key=lambda m: (m.split("-")[0], rank.get(m.split("-")[-1], 9)))


def render_box_plots(records, out: str) -> list[str]:
    paths = []
    clusters = sorted({r.cluster for r in records})
    models = _model_order({r.model for r in records})
    for cluster in clusters:
        fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(models), 3.6))
        data = [[r.rmse_kw for r in records
                 if r.cluster == cluster and r.model == m and r.split == "test"]
                for m in models]
        ax.boxplot(data, tick_labels=models)
        ax.set_ylabel("test RMSE (kW)")
        ax.set_title(f"cluster {cluster}: test RMSE across seeds")
        ax.tick_params(axis="x", rotation=30)
        paths.append(_save(fig, os.path.join(out, f"box_test_c{cluster}.png")))
    return paths


def render_mean_bars(records, out: str) -> list[str]:
    rows = aggregate(records)
    paths = []
    for split in ("train", "test"):
        split_rows = [r for r in rows if r["split"] == split]
        if not split_rows:
            continue
        clusters = sorted({r["cluster"] for r in split_rows})
        models = _model_order({r["model"] for r in split_rows})
        x = np.arange(len(clusters), dtype=float)
        width = 0.8 / max(len(models), 1)
        fig, ax = plt.subplots(figsize=(1.6 + 1.6 * len(clusters), 3.8))
        for i, model in enumerate(models):
            means = [next((r["mean_rmse"] for r in split_rows
                           if r["model"] == model and r["cluster"] == c), np.nan)
                     for c in clusters]
            stds = [next((r["std_rmse"] for r in split_rows
                          if r["model"] == model and r["cluster"] == c), 0.0)
                    for c in clusters]
            ax.bar(x + i * width, means, width, yerr=stds, capsize=2, label=model)
        ax.set_xticks(x + 0.4 - width / 2)
        ax.set_xticklabels([f"cluster {c}" for c in clusters])
        ax.set_yscale("log")
        ax.set_ylabel(f"mean {split} RMSE (kW)")
        ax.legend(fontsize=7)
        paths.append(_save(fig, os.path.join(out, f"mean_rmse_{split}.png")))
    return paths


def render_prediction_overlays(run_dir: str, out: str, max_days: int = 3) -> list[str]:
    paths = []
    for path in sorted(glob.glob(os.path.join(run_dir, "predictions_*.csv"))):
        name = os.path.basename(path)[len("predictions_"):-len(".csv")]
        days: dict[str, list[tuple[str, float, float]]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                days.setdefault(row["day_id"], []).append(
                    (row["slot"], float(row["y_kw"]), float(row["yhat_kw"])))
        if not days:
            continue
        picked = list(days)[:max_days]
        fig, axes = plt.subplots(1, len(picked), figsize=(3.4 * len(picked), 3.2),
                                 squeeze=False)
        for ax, day in zip(axes[0], picked):
            slots = [s for s, _, _ in days[day]]
            ax.plot(slots, [y for _, y, _ in days[day]], "o-", label="actual")
            ax.plot(slots, [p for _, _, p in days[day]], "s--", label="forecast")
            ax.set_title(f"{name}\n{day}", fontsize=8)
            ax.tick_params(axis="x", rotation=60, labelsize=6)
            ax.set_ylabel("kW", fontsize=7)
            ax.legend(fontsize=6)
        paths.append(_save(fig, os.path.join(out, f"forecast_{name}.png")))
    return paths


def render_transfer_traces(run_dir: str, out: str) -> list[str]:
    groups: dict[tuple[str, str], list[tuple[str, list[float]]]] = {}
    pattern = re.compile(r"transfer_(\w+)_c(\d+)_s(\d+)\.csv$")
    for path in sorted(glob.glob(os.path.join(run_dir, "transfer_*.csv"))):
        match = pattern.search(os.path.basename(path))
        if not match:
            continue
        kind, cluster, seed = match.groups()
        with open(path, newline="") as fh:
            trace = [float(row["gbestval"]) for row in csv.DictReader(fh)]
        groups.setdefault((kind, cluster), []).append((seed, trace))
    paths = []
    for (kind, cluster), traces in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        for seed, trace in traces:
            ax.plot(range(len(trace)), trace, label=f"seed {seed}")
        ax.set_xlabel("evaluation round")
        ax.set_ylabel("swarm best train RMSE (kW)")
        ax.set_title(f"{kind}, cluster {cluster}")
        ax.legend(fontsize=6)
        paths.append(_save(fig, os.path.join(out, f"transfer_{kind}_c{cluster}.png")))
    return paths


def render_report_figures(run_dir: str) -> list[str]:
    """Render every figure the run's CSV artifacts support."""
    raw_path = os.path.join(run_dir, RAW_RUNS)
    out = os.path.join(run_dir, "figures")
    os.makedirs(out, exist_ok=True)
    paths: list[str] = []
    if os.path.exists(raw_path):
        records = read_raw_runs(raw_path)
        paths += render_box_plots(records, out)
        paths += render_mean_bars(records, out)
    paths += render_prediction_overlays(run_dir, out)
    paths += render_transfer_traces(run_dir, out)
    return paths
