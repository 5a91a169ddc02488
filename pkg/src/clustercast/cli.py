"""Command-line entry point.

Subcommands: synth (write a synthetic benchmark table), cluster (group the
days), run (full merged-vs-clustered comparison), report (regenerate
aggregates and figures from emitted per-seed rows). Exit codes: 0 success,
1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import clustering, dataset, harness
from .config import ConfigError, RunConfig, build


def _say(msg: str) -> None:
    print(f"[clustercast] {msg}", flush=True)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustercast",
        description="Group day-aligned generation profiles and compare a "
                    "merged-data forecaster against per-group forecasters "
                    "with swarm-blended parameter transfer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("synth", "generate a synthetic benchmark table"),
        ("cluster", "cluster the days and write assignments/centers"),
        ("run", "run the full comparison and write reports"),
        ("report", "rebuild aggregate report and figures from raw rows"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", help="JSON config file (defaults apply otherwise)")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--seed", type=int, help="override the top-level seed")
        cmd.add_argument("--models", help="comma-separated cell kinds (rnn,lstm,gru)")
        cmd.add_argument("--seeds", type=int, dest="num_seeds",
                         help="number of experiment seeds")
        cmd.add_argument("--mgen", type=int, help="swarm generations")
        cmd.add_argument("--quick", action="store_true",
                         help="10x smaller day counts, iterations and generations")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "models": args.models.split(",") if args.models else None,
        "num_seeds": args.num_seeds,
        "mgen": args.mgen,
    }
    return build(args.config, overrides, quick=args.quick)


def _copy_config(cfg: RunConfig, out: str) -> None:
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(cfg.resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_table(cfg: RunConfig) -> tuple[dataset.RawSeriesTable, np.ndarray | None]:
    """CSV takes precedence; otherwise draw the configured synthetic table."""
    if cfg.csv_path:
        return dataset.load_csv(cfg.csv_path), None
    table, labels = dataset.generate_synthetic(cfg.synthetic, cfg.seed)
    return table, labels


def _load_assignments(cfg: RunConfig, table: dataset.RawSeriesTable) -> np.ndarray | None:
    if not cfg.assignments_path:
        return None
    by_id: dict[str, int] = {}
    import csv as _csv
    with open(cfg.assignments_path, newline="") as fh:
        for row in _csv.DictReader(fh):
            by_id[row["day_id"]] = int(row["cluster"])
    try:
        return np.array([by_id[d] for d in table.day_ids])
    except KeyError as exc:
        raise ConfigError(f"assignments file is missing day {exc.args[0]!r}") from None


def cmd_synth(cfg: RunConfig) -> None:
    out = cfg.require_out()
    if cfg.synthetic is None:
        raise ConfigError("synth needs a data.synthetic section")
    os.makedirs(out, exist_ok=True)
    table, labels = dataset.generate_synthetic(cfg.synthetic, cfg.seed)
    dataset.save_csv(table, os.path.join(out, "data.csv"))
    clustering.save_assignments(os.path.join(out, "labels.csv"),
                                table.day_ids, labels)
    _copy_config(cfg, out)
    _say(f"wrote {table.n_days} days x {table.n_slots} slots to {out}/data.csv")


def cmd_cluster(cfg: RunConfig) -> None:
    out = cfg.require_out()
    os.makedirs(out, exist_ok=True)
    table, _ = _load_table(cfg)
    exp = cfg.experiment
    model = clustering.kmeans_fit(
        table.values, exp.n_clusters,
        seed=harness.derive_seed(cfg.seed, "kmeans"),
        max_iterations=exp.kmeans_max_iterations,
        init=exp.kmeans_init,
    )
    model = clustering.relabel_by_peak(model)
    clustering.save_assignments(os.path.join(out, "assignments.csv"),
                                table.day_ids, model.assignments)
    clustering.save_centers(os.path.join(out, "centers.csv"),
                            model.centers, table.slot_labels)
    _copy_config(cfg, out)
    _say(f"{exp.n_clusters} clusters over {table.n_days} days "
         f"(sizes {model.counts.tolist()}, {model.iterations_run} iterations)")


def cmd_run(cfg: RunConfig) -> None:
    out = cfg.require_out()
    os.makedirs(out, exist_ok=True)
    table, _ = _load_table(cfg)
    assignments = _load_assignments(cfg, table)
    _copy_config(cfg, out)
    harness.run_experiment(table, cfg.experiment, out_dir=out,
                           assignments=assignments, log=_say)
    if cfg.figures:
        from .figures import render_report_figures
        figures = render_report_figures(out)
        _say(f"rendered {len(figures)} figures under {out}/figures")
    _say(f"report written to {out}/{harness.REPORT_CSV}")


def cmd_report(cfg: RunConfig) -> None:
    out = cfg.require_out()
    raw_path = os.path.join(out, harness.RAW_RUNS)
    if not os.path.exists(raw_path):
        raise ConfigError(f"no {harness.RAW_RUNS} under {out}; run `clustercast run` first")
    records = harness.read_raw_runs(raw_path)
    runtime_path = os.path.join(out, harness.RUNTIMES)
    runtimes = harness.read_runtimes(runtime_path) if os.path.exists(runtime_path) else None
    harness.write_report(records, runtimes, out)
    if cfg.figures:
        from .figures import render_report_figures
        figures = render_report_figures(out)
        _say(f"rendered {len(figures)} figures under {out}/figures")
    _say(f"rebuilt {out}/{harness.REPORT_CSV} from {len(records)} raw rows")


_COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = _config_from_args(args)
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary of the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
