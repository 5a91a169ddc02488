"""JSON run configuration: defaults, validation, flag overrides.

One config file drives every subcommand; command-line flags may only
override scalar fields. Validation happens up front (unknown keys,
out-of-range values, missing input paths) so a bad config never starts
a computation, and the resolved config is copied next to the results.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .dataset import ClusterProfileSpec, SyntheticSpec
from .harness import ExperimentConfig
from .predictor import CELL_KINDS, TrainConfig
from .transfer import PsoConfig


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 1."""


DEFAULTS: dict = {
    "seed": 0,
    "out": None,
    "models": ["lstm"],
    "num_seeds": 10,
    "seeds": None,
    "figures": True,
    "data": {
        "csv": None,
        "assignments": None,
        "synthetic": {
            "clusters": [
                {"amplitude": 2.0, "peak_slot": 11.0, "width": 3.5, "noise": 0.10, "days": 1816},
                {"amplitude": 8.0, "peak_slot": 11.5, "width": 4.0, "noise": 0.40, "days": 564},
                {"amplitude": 25.0, "peak_slot": 12.0, "width": 4.5, "noise": 1.25, "days": 246},
                {"amplitude": 80.0, "peak_slot": 12.5, "width": 5.0, "noise": 4.00, "days": 61},
            ],
            "slots": 24,
            "start": "07:00",
            "interval_minutes": 30,
        },
    },
    "windows": {"input": [0, 14], "output": [14, 24]},
    "train_fraction": 0.8,
    "scaling": "global",
    "clustering": {"n_clusters": 4, "max_iterations": 100, "init": "sample"},
    "training": {
        "baseline": {
            "hidden": 10, "iterations": 4500, "learning_rate": 0.01,
            "batch_size": 32, "eval_every": 10, "teacher_forcing": False,
        },
        "clustered": {
            "hidden": 10, "iterations": 3000, "learning_rate": 0.01,
            "batch_size": 32, "eval_every": 10, "teacher_forcing": False,
        },
    },
    "pso": {
        "particles": 15, "generations": 100, "inertia": 0.729,
        "cognitive": 1.49445, "social": 1.49445, "v_max": 0.4, "u_max": 1.0,
    },
}

_CLUSTER_KEYS = {"amplitude", "peak_slot", "width", "noise", "days"}


def _reject_unknown(user: dict, defaults: dict, path: str) -> None:
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key '{path}{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            _reject_unknown(value, defaults[key], f"{path}{key}.")


def _merge(base: dict, user: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return user


def resolve(user: dict | None = None, overrides: dict | None = None,
            quick: bool = False) -> dict:
    """Defaults <- config file <- scalar flag overrides (<- quick preset)."""
    doc = copy.deepcopy(DEFAULTS)
    if user:
        _reject_unknown(user, DEFAULTS, "")
        doc = _merge(doc, user)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in ("seed", "out", "models", "num_seeds", "mgen"):
            raise ConfigError(f"unknown override {key!r}")
        if key == "mgen":
            doc["pso"]["generations"] = value
        elif key == "num_seeds":
            doc["num_seeds"] = value
            doc["seeds"] = None
        else:
            doc[key] = value
    if quick:
        _apply_quick(doc)
    return doc


def _apply_quick(doc: dict) -> None:
    """Shrink day counts, training iterations and swarm generations 10x."""
    synth = doc["data"]["synthetic"]
    if synth:
        for cluster in synth["clusters"]:
            cluster["days"] = max(4, cluster["days"] // 10)
    for section in doc["training"].values():
        section["iterations"] = max(1, section["iterations"] // 10)
    doc["pso"]["generations"] = doc["pso"]["generations"] // 10


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _parse_hhmm(text) -> int:
    try:
        hh, mm = str(text).split(":")
        minutes = int(hh) * 60 + int(mm)
    except ValueError:
        raise ConfigError(f"bad time of day {text!r}; expected HH:MM") from None
    _expect(0 <= minutes < 24 * 60, f"time of day {text!r} out of range")
    return minutes


@dataclass
class RunConfig:
    """Validated, fully resolved settings for one invocation."""

    resolved: dict
    seed: int
    out: str | None
    seeds: list[int]
    figures: bool
    csv_path: str | None
    assignments_path: str | None
    synthetic: SyntheticSpec | None
    experiment: ExperimentConfig

    def require_out(self) -> str:
        if not self.out:
            raise ConfigError("an output directory is required (config 'out' or --out)")
        return self.out


def validate(doc: dict) -> RunConfig:
    _expect(isinstance(doc["seed"], int) and doc["seed"] >= 0,
            "seed must be a non-negative integer")

    models = doc["models"]
    _expect(isinstance(models, list) and models, "models must be a non-empty list")
    for m in models:
        _expect(m in CELL_KINDS, f"unknown model {m!r}; choose from {CELL_KINDS}")

    if doc["seeds"] is not None:
        _expect(isinstance(doc["seeds"], list) and doc["seeds"],
                "seeds must be a non-empty list of integers")
        _expect(all(isinstance(s, int) and s >= 0 for s in doc["seeds"]),
                "seeds must be non-negative integers")
        seeds = list(doc["seeds"])
    else:
        _expect(isinstance(doc["num_seeds"], int) and doc["num_seeds"] >= 1,
                "num_seeds must be a positive integer")
        seeds = [doc["seed"] + i for i in range(doc["num_seeds"])]

    data = doc["data"]
    for key in ("csv", "assignments"):
        if data[key] is not None:
            _expect(os.path.exists(data[key]), f"data.{key} path not found: {data[key]}")

    synthetic = None
    if data["synthetic"] is not None:
        synth = data["synthetic"]
        _expect(isinstance(synth["clusters"], list) and synth["clusters"],
                "data.synthetic.clusters must be a non-empty list")
        clusters = []
        for idx, c in enumerate(synth["clusters"]):
            _expect(isinstance(c, dict) and set(c) <= _CLUSTER_KEYS,
                    f"data.synthetic.clusters[{idx}]: allowed keys are {sorted(_CLUSTER_KEYS)}")
            entry = {**{"amplitude": 1.0, "peak_slot": 11.0, "width": 4.0,
                        "noise": 0.0, "days": 100}, **c}
            try:
                clusters.append(ClusterProfileSpec(**entry))
            except ValueError as exc:
                raise ConfigError(f"data.synthetic.clusters[{idx}]: {exc}") from None
        try:
            synthetic = SyntheticSpec(
                clusters=clusters,
                slots=int(synth["slots"]),
                start_minutes=_parse_hhmm(synth["start"]),
                step_minutes=int(synth["interval_minutes"]),
            )
        except ValueError as exc:
            raise ConfigError(f"data.synthetic: {exc}") from None
    _expect(data["csv"] is not None or synthetic is not None,
            "either data.csv or data.synthetic must be given")

    win = doc["windows"]
    for key in ("input", "output"):
        rng = win[key]
        _expect(isinstance(rng, list) and len(rng) == 2
                and all(isinstance(v, int) for v in rng) and 0 <= rng[0] < rng[1],
                f"windows.{key} must be [start, stop) with 0 <= start < stop")
    _expect(win["input"][1] <= win["output"][0],
            "the input window must come before the output window")

    _expect(isinstance(doc["train_fraction"], (int, float))
            and 0.0 < doc["train_fraction"] < 1.0,
            "train_fraction must be inside (0, 1)")
    _expect(doc["scaling"] in ("global", "per_slot"),
            "scaling must be 'global' or 'per_slot'")

    clus = doc["clustering"]
    _expect(isinstance(clus["n_clusters"], int) and clus["n_clusters"] >= 1,
            "clustering.n_clusters must be >= 1")
    _expect(isinstance(clus["max_iterations"], int) and clus["max_iterations"] >= 1,
            "clustering.max_iterations must be >= 1")
    _expect(clus["init"] in ("sample", "plusplus"),
            "clustering.init must be 'sample' or 'plusplus'")

    def train_cfg(section: dict, label: str) -> TrainConfig:
        try:
            return TrainConfig(
                hidden=int(section["hidden"]),
                max_iterations=int(section["iterations"]),
                learning_rate=float(section["learning_rate"]),
                batch_size=int(section["batch_size"]),
                eval_every=int(section["eval_every"]),
                teacher_forcing=bool(section["teacher_forcing"]),
            )
        except ValueError as exc:
            raise ConfigError(f"training.{label}: {exc}") from None

    pso = doc["pso"]
    try:
        pso_cfg = PsoConfig(
            particles=int(pso["particles"]),
            generations=int(pso["generations"]),
            inertia=float(pso["inertia"]),
            cognitive=float(pso["cognitive"]),
            social=float(pso["social"]),
            v_max=float(pso["v_max"]),
            u_max=float(pso["u_max"]),
        )
    except ValueError as exc:
        raise ConfigError(f"pso: {exc}") from None

    experiment = ExperimentConfig(
        kinds=tuple(models),
        seeds=tuple(seeds),
        n_clusters=clus["n_clusters"],
        input_slots=tuple(win["input"]),
        output_slots=tuple(win["output"]),
        train_fraction=float(doc["train_fraction"]),
        scaling=doc["scaling"],
        kmeans_max_iterations=clus["max_iterations"],
        kmeans_init=clus["init"],
        baseline_train=train_cfg(doc["training"]["baseline"], "baseline"),
        cluster_train=train_cfg(doc["training"]["clustered"], "clustered"),
        pso=pso_cfg,
    )
    return RunConfig(
        resolved=doc,
        seed=doc["seed"],
        out=doc["out"],
        seeds=seeds,
        figures=bool(doc["figures"]),
        csv_path=data["csv"],
        assignments_path=data["assignments"],
        synthetic=synthetic,
        experiment=experiment,
    )


def build(config_path: str | None, overrides: dict | None = None,
          quick: bool = False) -> RunConfig:
    user = load_config_file(config_path) if config_path else None
    return validate(resolve(user, overrides, quick))
