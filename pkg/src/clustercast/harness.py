"""Benchmark orchestration: one merged-data predictor versus per-group
predictors improved by swarm-blended parameter transfer.

Every experiment seed drives the whole chain (clustering, splits,
initialization, swarm) through deterministic derived sub-seeds, so reruns
are bit-identical. Metrics are kW-scale RMSE, reported per customer group
for both approaches, with per-seed raw rows emitted for downstream
plotting and aggregate mean +/- population standard deviation on top.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import kmeans_fit, relabel_by_peak
from .dataset import (
    RawSeriesTable,
    Scaler,
    SupervisedDataset,
    SlotRange,
    fit_apply_scaler,
    make_windows,
    split,
)
from .predictor import ParameterSet, TrainConfig, forward, rmse, train
from .transfer import PsoConfig, TransferResult, run_transfer

RAW_RUNS = "raw_runs.csv"
RUNTIMES = "runtimes.csv"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"


def derive_seed(master: int, *tags) -> int:
    """Stable sub-seed for a named purpose under one master seed."""
    parts = [int(master)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint64)[0])


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class ExperimentConfig:
    kinds: tuple[str, ...] = ("lstm",)
    seeds: tuple[int, ...] = tuple(range(10))
    n_clusters: int = 4
    input_slots: SlotRange = (0, 14)
    output_slots: SlotRange = (14, 24)
    train_fraction: float = 0.8
    scaling: str = "global"
    kmeans_max_iterations: int = 100
    kmeans_init: str = "sample"
    baseline_train: TrainConfig = field(default_factory=lambda: TrainConfig(max_iterations=4500))
    cluster_train: TrainConfig = field(default_factory=lambda: TrainConfig(max_iterations=3000))
    pso: PsoConfig = field(default_factory=PsoConfig)

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("need at least one cell kind")
        if not self.seeds:
            raise ValueError("need at least one seed")


@dataclass
class RunRecord:
    model: str
    cluster: int
    seed: int
    split: str      # "train" | "test"
    rmse_kw: float


@dataclass
class ClusterSlice:
    """One group's data in raw kW and in its own scaled space."""

    train_raw: SupervisedDataset
    test_raw: SupervisedDataset
    train_scaled: SupervisedDataset
    test_scaled: SupervisedDataset
    scaler: Scaler


@dataclass
class PreparedData:
    clusters: list[ClusterSlice]
    merged_train: SupervisedDataset       # global-scaler space
    merged_test: SupervisedDataset
    global_scaler: Scaler
    merged_train_clusters: np.ndarray     # cluster id per merged row
    merged_test_clusters: np.ndarray
    assignments: np.ndarray
    centers: np.ndarray | None


def _concat(datasets: list[SupervisedDataset]) -> SupervisedDataset:
    ids: list[str] | None = []
    for ds in datasets:
        if ds.day_ids is None:
            ids = None
            break
        ids.extend(ds.day_ids)
    return SupervisedDataset(
        inputs=np.concatenate([ds.inputs for ds in datasets]),
        targets=np.concatenate([ds.targets for ds in datasets]),
        day_ids=ids,
        target_slot_labels=datasets[0].target_slot_labels,
    )


def prepare_data(table: RawSeriesTable, cfg: ExperimentConfig, master_seed: int,
                 assignments: np.ndarray | None = None) -> PreparedData:
    """Cluster days, window them, split 80/20 per group, fit scalers.

    The per-group split and scaler statistics are shared by both modeling
    approaches; the merged path gets a single scaler fit on the merged
    training rows because it cannot know the groups.
    """
    centers = None
    if assignments is None:
        model = kmeans_fit(
            table.values, cfg.n_clusters,
            seed=derive_seed(master_seed, "kmeans"),
            max_iterations=cfg.kmeans_max_iterations,
            init=cfg.kmeans_init,
        )
        model = relabel_by_peak(model)
        assignments, centers = model.assignments, model.centers
    else:
        assignments = np.asarray(assignments)
        if assignments.shape[0] != table.n_days:
            raise ValueError("one assignment per day required")
        if assignments.min() < 0 or assignments.max() >= cfg.n_clusters:
            raise ValueError(
                f"assignment ids must lie in [0, {cfg.n_clusters}); "
                f"found {assignments.min()}..{assignments.max()}")

    windows = make_windows(table, cfg.input_slots, cfg.output_slots)
    slices = []
    for j in range(cfg.n_clusters):
        rows = np.flatnonzero(assignments == j)
        if rows.size < 2:
            raise ValueError(f"cluster {j} has {rows.size} day(s); need at least 2")
        train_j, test_j = split(windows.take(rows), cfg.train_fraction,
                                seed=derive_seed(master_seed, "split", j))
        train_s, test_s, scaler = fit_apply_scaler(train_j, test_j, cfg.scaling)
        slices.append(ClusterSlice(train_j, test_j, train_s, test_s, scaler))

    merged_train_raw = _concat([s.train_raw for s in slices])
    merged_test_raw = _concat([s.test_raw for s in slices])
    merged_train, merged_test, global_scaler = fit_apply_scaler(
        merged_train_raw, merged_test_raw, cfg.scaling)
    train_ids = np.concatenate([
        np.full(s.train_raw.n_samples, j) for j, s in enumerate(slices)])
    test_ids = np.concatenate([
        np.full(s.test_raw.n_samples, j) for j, s in enumerate(slices)])
    return PreparedData(slices, merged_train, merged_test, global_scaler,
                        train_ids, test_ids, assignments, centers)


@dataclass
class BaselineArtifacts:
    params: ParameterSet
    trace: list[tuple[int, float]]
    test_predictions: list[np.ndarray]    # per cluster, kW


@dataclass
class ClusterArtifacts:
    pre_params: ParameterSet
    post_params: ParameterSet
    train_trace: list[tuple[int, float]]
    transfer: TransferResult
    test_predictions_pre: np.ndarray      # kW
    test_predictions_post: np.ndarray


def _predict_kw(params: ParameterSet, inputs: np.ndarray, t_out: int,
                scaler: Scaler) -> np.ndarray:
    return scaler.inverse_targets(forward(params.kind, params, inputs, t_out))


def run_baseline(kind: str, prep: PreparedData, base_cfg: TrainConfig,
                 master_seed: int) -> tuple[list[RunRecord], BaselineArtifacts]:
    """Train one predictor on the merged data; report RMSE per group in kW."""
    cfg = replace(base_cfg, seed=derive_seed(master_seed, "train", kind, "merged"))
    params, trace = train(kind, prep.merged_train.inputs,
                          prep.merged_train.targets, cfg)
    t_out = prep.merged_train.targets.shape[1]
    model = f"{kind}-merged"
    records, test_preds = [], []
    for j, slice_ in enumerate(prep.clusters):
        tr_rows = np.flatnonzero(prep.merged_train_clusters == j)
        te_rows = np.flatnonzero(prep.merged_test_clusters == j)
        tr_kw = _predict_kw(params, prep.merged_train.inputs[tr_rows], t_out,
                            prep.global_scaler)
        te_kw = _predict_kw(params, prep.merged_test.inputs[te_rows], t_out,
                            prep.global_scaler)
        records.append(RunRecord(model, j, master_seed, "train",
                                 rmse(slice_.train_raw.targets, tr_kw)))
        records.append(RunRecord(model, j, master_seed, "test",
                                 rmse(slice_.test_raw.targets, te_kw)))
        test_preds.append(te_kw)
    return records, BaselineArtifacts(params, trace, test_preds)


def run_clustered(kind: str, prep: PreparedData, clus_cfg: TrainConfig,
                  pso_cfg: PsoConfig, master_seed: int,
                  ) -> tuple[list[RunRecord], list[ClusterArtifacts], dict[str, float]]:
    """Per-group training followed by swarm-blended transfer for each target.

    Emits rows for the plain per-group predictors and for the blended ones,
    so the no-degradation of the blend step is visible in the raw report.
    """
    t_train = time.perf_counter()
    trained, traces = [], []
    for j, slice_ in enumerate(prep.clusters):
        cfg = replace(clus_cfg, seed=derive_seed(master_seed, "train", kind, j))
        params_j, trace_j = train(kind, slice_.train_scaled.inputs,
                                  slice_.train_scaled.targets, cfg)
        trained.append(params_j)
        traces.append(trace_j)
    t_train = time.perf_counter() - t_train

    t_pso = time.perf_counter()
    records, artifacts = [], []
    t_out = prep.clusters[0].train_raw.targets.shape[1]
    for j, slice_ in enumerate(prep.clusters):
        pso_j = replace(pso_cfg, seed=derive_seed(master_seed, "pso", kind, j))
        result = run_transfer(j, trained, slice_.train_scaled, pso_j)
        pre_kw = _predict_kw(trained[j], slice_.test_scaled.inputs, t_out,
                             slice_.scaler)
        post_kw = _predict_kw(result.params, slice_.test_scaled.inputs, t_out,
                              slice_.scaler)
        records.append(RunRecord(f"{kind}-percluster", j, master_seed, "train",
                                 result.baseline_rmse))
        records.append(RunRecord(f"{kind}-percluster", j, master_seed, "test",
                                 rmse(slice_.test_raw.targets, pre_kw)))
        records.append(RunRecord(f"{kind}-blended", j, master_seed, "train",
                                 result.train_rmse))
        records.append(RunRecord(f"{kind}-blended", j, master_seed, "test",
                                 rmse(slice_.test_raw.targets, post_kw)))
        artifacts.append(ClusterArtifacts(trained[j], result.params, traces[j],
                                          result, pre_kw, post_kw))
    t_pso = time.perf_counter() - t_pso
    return records, artifacts, {"train_s": t_train, "pso_s": t_pso}


def aggregate(records: list[RunRecord]) -> list[dict]:
    """Mean and population standard deviation over seeds per (model, cluster, split)."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.model, rec.cluster, rec.split), []).append(rec.rmse_kw)
    rows = []
    for (model, cluster, split_), vals in sorted(groups.items()):
        arr = np.array(vals)
        rows.append({
            "model": model,
            "cluster": cluster,
            "split": split_,
            "mean_rmse": float(arr.mean()),
            "std_rmse": float(arr.std()),   # population convention
            "n_seeds": len(vals),
        })
    return rows


def best_per_cluster(rows: list[dict]) -> dict[str, dict[str, str]]:
    """Lowest mean RMSE per (cluster, split) across models."""
    best: dict[str, dict[str, str]] = {}
    for row in rows:
        key = f"cluster{row['cluster']}"
        slot = best.setdefault(key, {})
        cur = slot.get(row["split"])
        if cur is None or row["mean_rmse"] < cur[1]:
            slot[row["split"]] = (row["model"], row["mean_rmse"])
    return {
        cluster: {split_: model for split_, (model, _) in slots.items()}
        for cluster, slots in best.items()
    }


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_raw_runs(records: list[RunRecord], path: str) -> None:
    rows = [[r.model, r.cluster, r.seed, r.split, repr(r.rmse_kw)] for r in records]
    atomic_write_text(path, _csv_text(["model", "cluster", "seed", "split", "rmse_kw"], rows))


def read_raw_runs(path: str) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [RunRecord(r["model"], int(r["cluster"]), int(r["seed"]),
                          r["split"], float(r["rmse_kw"])) for r in reader]


def write_runtimes(runtimes: list[tuple[str, int, float]], path: str) -> None:
    rows = [[model, seed, repr(sec)] for model, seed, sec in runtimes]
    atomic_write_text(path, _csv_text(["model", "seed", "seconds"], rows))


def read_runtimes(path: str) -> list[tuple[str, int, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(r["model"], int(r["seed"]), float(r["seconds"])) for r in reader]


def write_report(records: list[RunRecord],
                 runtimes: list[tuple[str, int, float]] | None,
                 out_dir: str) -> list[dict]:
    """Aggregate CSV and JSON; a pure function of the per-seed rows."""
    rows = aggregate(records)
    csv_rows = [[r["model"], r["cluster"], r["split"],
                 repr(r["mean_rmse"]), repr(r["std_rmse"])] for r in rows]
    atomic_write_text(
        os.path.join(out_dir, REPORT_CSV),
        _csv_text(["model", "cluster", "split", "mean_rmse", "std_rmse"], csv_rows))
    doc = {
        "std_convention": "population",
        "rows": rows,
        "best": best_per_cluster(rows),
    }
    if runtimes:
        by_model: dict[str, list[float]] = {}
        for model, _seed, sec in runtimes:
            by_model.setdefault(model, []).append(sec)
        doc["runtime_mean_s"] = {
            m: float(np.mean(v)) for m, v in sorted(by_model.items())}
    atomic_write_text(os.path.join(out_dir, REPORT_JSON),
                      json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return rows


def write_predictions(path: str, day_ids: list[str], slot_labels: list[str],
                      y_kw: np.ndarray, yhat_kw: np.ndarray) -> None:
    rows = []
    for i, day_id in enumerate(day_ids):
        for t, slot in enumerate(slot_labels):
            rows.append([day_id, slot, repr(float(y_kw[i, t])),
                         repr(float(yhat_kw[i, t]))])
    atomic_write_text(path, _csv_text(["day_id", "slot", "y_kw", "yhat_kw"], rows))


def write_transfer_log(path: str, trace: list[float]) -> None:
    rows = [[g, repr(float(v))] for g, v in enumerate(trace)]
    atomic_write_text(path, _csv_text(["generation", "gbestval"], rows))


def write_solution(path: str, result: TransferResult) -> None:
    doc = {
        "mask": [int(v) for v in result.solution.mask],
        "coefficients": [float(v) for v in result.solution.coefficients],
        "target": result.solution.target,
        "improved": result.improved,
        "train_rmse_kw": result.train_rmse,
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    runtimes: list[tuple[str, int, float]]
    baselines: dict[tuple[str, int], BaselineArtifacts]       # (kind, seed)
    clustered: dict[tuple[str, int], list[ClusterArtifacts]]
    prepared: dict[int, PreparedData]                          # per seed


def run_experiment(table: RawSeriesTable, cfg: ExperimentConfig,
                   out_dir: str | None = None,
                   assignments: np.ndarray | None = None,
                   log=None) -> ExperimentResult:
    """Full comparison over all configured kinds and seeds.

    With an output directory this also emits raw_runs.csv, runtimes.csv,
    per-target transfer logs and decoded solutions for every seed,
    prediction files for the first seed, and the aggregate report.
    """
    say = log or (lambda msg: None)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    records: list[RunRecord] = []
    runtimes: list[tuple[str, int, float]] = []
    baselines: dict[tuple[str, int], BaselineArtifacts] = {}
    clustered: dict[tuple[str, int], list[ClusterArtifacts]] = {}
    prepared: dict[int, PreparedData] = {}

    for seed in cfg.seeds:
        prep = prepare_data(table, cfg, seed, assignments)
        prepared[seed] = prep
        say(f"seed {seed}: clusters sized {[s.train_raw.n_samples for s in prep.clusters]} (train days)")
        for kind in cfg.kinds:
            t0 = time.perf_counter()
            base_records, base_art = run_baseline(kind, prep, cfg.baseline_train, seed)
            merged_s = time.perf_counter() - t0
            records.extend(base_records)
            baselines[(kind, seed)] = base_art
            runtimes.append((f"{kind}-merged", seed, merged_s))

            clus_records, clus_art, timing = run_clustered(
                kind, prep, cfg.cluster_train, cfg.pso, seed)
            records.extend(clus_records)
            clustered[(kind, seed)] = clus_art
            runtimes.append((f"{kind}-percluster", seed, timing["train_s"]))
            runtimes.append((f"{kind}-blended", seed,
                             timing["train_s"] + timing["pso_s"]))
            say(f"seed {seed} {kind}: merged {merged_s:.1f}s, "
                f"per-cluster {timing['train_s']:.1f}s, transfer {timing['pso_s']:.1f}s")
            if out_dir is not None:
                for j, art in enumerate(clus_art):
                    stem = f"transfer_{kind}_c{j}_s{seed}"
                    write_transfer_log(os.path.join(out_dir, f"{stem}.csv"),
                                       art.transfer.trace)
                    write_solution(
                        os.path.join(out_dir, f"solution_{kind}_c{j}_s{seed}.json"),
                        art.transfer)

    if out_dir is not None:
        write_raw_runs(records, os.path.join(out_dir, RAW_RUNS))
        write_runtimes(runtimes, os.path.join(out_dir, RUNTIMES))
        _write_prediction_files(cfg, prepared, baselines, clustered, out_dir)
        write_report(records, runtimes, out_dir)
    return ExperimentResult(records, runtimes, baselines, clustered, prepared)


def _write_prediction_files(cfg: ExperimentConfig, prepared, baselines,
                            clustered, out_dir: str) -> None:
    seed = cfg.seeds[0]
    prep = prepared[seed]
    for kind in cfg.kinds:
        base = baselines[(kind, seed)]
        arts = clustered[(kind, seed)]
        for j, slice_ in enumerate(prep.clusters):
            day_ids = slice_.test_raw.day_ids or [
                f"row{i}" for i in range(slice_.test_raw.n_samples)]
            slots = slice_.test_raw.target_slot_labels or [
                f"t{t}" for t in range(slice_.test_raw.targets.shape[1])]
            y = slice_.test_raw.targets
            for model, yhat in (
                (f"{kind}-merged", base.test_predictions[j]),
                (f"{kind}-percluster", arts[j].test_predictions_pre),
                (f"{kind}-blended", arts[j].test_predictions_post),
            ):
                write_predictions(
                    os.path.join(out_dir, f"predictions_{model}_{j}.csv"),
                    day_ids, slots, y, yhat)
