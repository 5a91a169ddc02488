"""Loading, windowing, scaling, splitting and synthesis of day-aligned generation tables.

A table holds one day per row and one 30-minute slot per column, in kW.
Supervised pairs are built by slicing each day into an input window and a
target window, so a sample never mixes slots from different days.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

SlotRange = tuple[int, int]  # half-open [start, stop) over slot indices


@dataclass
class RawSeriesTable:
    """N days x M half-hour slots of generation values in kW."""

    values: np.ndarray          # (N, M) float64
    slot_labels: list[str]      # length M, time-of-day labels
    day_ids: list[str]          # length N

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        n, m = self.values.shape
        if m < 2:
            raise ValueError("a table needs at least 2 slots per day")
        if len(self.slot_labels) != m:
            raise ValueError(f"{len(self.slot_labels)} slot labels for {m} columns")
        if len(self.day_ids) != n:
            raise ValueError(f"{len(self.day_ids)} day ids for {n} rows")
        if not np.isfinite(self.values).all():
            raise ValueError("table contains non-finite values")

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]


@dataclass
class SupervisedDataset:
    """Paired input and target windows, one row per day."""

    inputs: np.ndarray                    # (S, T_in)
    targets: np.ndarray                   # (S, T_out)
    scaler: "Scaler | None" = None
    day_ids: list[str] | None = None
    target_slot_labels: list[str] | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have equal row counts")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def take(self, rows: np.ndarray) -> "SupervisedDataset":
        """Row-subset copy, keeping per-row metadata aligned."""
        ids = [self.day_ids[i] for i in rows] if self.day_ids is not None else None
        return SupervisedDataset(
            self.inputs[rows], self.targets[rows],
            scaler=self.scaler, day_ids=ids,
            target_slot_labels=self.target_slot_labels,
        )


class Scaler:
    """Min-max map to [0, 1] with statistics learned from training rows only.

    mode="global" tracks a single (lo, hi) over every input and target entry;
    mode="per_slot" tracks one (lo, hi) per input column and per target column.
    Constant statistics (hi == lo) map to 0.5 instead of dividing by zero.
    """

    def __init__(self, mode: str = "global"):
        if mode not in ("global", "per_slot"):
            raise ValueError(f"unknown scaling mode {mode!r}")
        self.mode = mode
        self.in_lo = self.in_hi = None
        self.out_lo = self.out_hi = None

    def fit(self, train: SupervisedDataset) -> "Scaler":
        if train.n_samples == 0:
            raise ValueError("cannot fit a scaler on an empty dataset")
        if self.mode == "global":
            lo = min(train.inputs.min(), train.targets.min())
            hi = max(train.inputs.max(), train.targets.max())
            self.in_lo = self.out_lo = np.float64(lo)
            self.in_hi = self.out_hi = np.float64(hi)
        else:
            self.in_lo = train.inputs.min(axis=0)
            self.in_hi = train.inputs.max(axis=0)
            self.out_lo = train.targets.min(axis=0)
            self.out_hi = train.targets.max(axis=0)
        return self

    @staticmethod
    def _forward(x: np.ndarray, lo, hi) -> np.ndarray:
        span = hi - lo
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (x - lo) / span
        return np.where(span == 0, 0.5, out)

    @staticmethod
    def _inverse(x: np.ndarray, lo, hi) -> np.ndarray:
        return np.where(hi - lo == 0, lo, x * (hi - lo) + lo)

    def transform(self, ds: SupervisedDataset) -> SupervisedDataset:
        return replace(
            ds,
            inputs=self._forward(ds.inputs, self.in_lo, self.in_hi),
            targets=self._forward(ds.targets, self.out_lo, self.out_hi),
            scaler=self,
        )

    def inverse_targets(self, arr: np.ndarray) -> np.ndarray:
        return self._inverse(np.asarray(arr, dtype=np.float64), self.out_lo, self.out_hi)

    def inverse_inputs(self, arr: np.ndarray) -> np.ndarray:
        return self._inverse(np.asarray(arr, dtype=np.float64), self.in_lo, self.in_hi)


@dataclass
class ClusterProfileSpec:
    """One synthetic customer group: a noisy bell-shaped diurnal curve."""

    amplitude: float    # peak generation, kW
    peak_slot: float    # slot index of the bell centre
    width: float        # bell width in slots
    noise: float        # additive Gaussian sigma, kW
    days: int

    def __post_init__(self):
        if self.days <= 0:
            raise ValueError("day count must be positive")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")


@dataclass
class SyntheticSpec:
    """Generator settings for a multi-group synthetic benchmark table."""

    clusters: list[ClusterProfileSpec]
    slots: int = 24
    start_minutes: int = 7 * 60     # first slot label, minutes from midnight
    step_minutes: int = 30

    def __post_init__(self):
        if len(self.clusters) < 1:
            raise ValueError("need at least one cluster")
        if self.slots < 2:
            raise ValueError("need at least 2 slots")
        amps = [c.amplitude for c in self.clusters]
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("cluster amplitudes must be strictly increasing")


def default_synthetic_spec(scale: float = 1.0) -> SyntheticSpec:
    """Four customer groups; most days in the lowest-amplitude group.

    `scale` multiplies the per-group day counts (floored, minimum 4 days).
    """
    base = [
        ClusterProfileSpec(amplitude=2.0, peak_slot=11.0, width=3.5, noise=0.10, days=1816),
        ClusterProfileSpec(amplitude=8.0, peak_slot=11.5, width=4.0, noise=0.40, days=564),
        ClusterProfileSpec(amplitude=25.0, peak_slot=12.0, width=4.5, noise=1.25, days=246),
        ClusterProfileSpec(amplitude=80.0, peak_slot=12.5, width=5.0, noise=4.00, days=61),
    ]
    if scale != 1.0:
        base = [replace(c, days=max(4, int(c.days * scale))) for c in base]
    return SyntheticSpec(clusters=base)


def slot_labels_for(spec: SyntheticSpec) -> list[str]:
    labels = []
    for k in range(spec.slots):
        minutes = spec.start_minutes + k * spec.step_minutes
        labels.append(f"{minutes // 60:02d}:{minutes % 60:02d}")
    return labels


def bell_profile(spec: ClusterProfileSpec, slots: int) -> np.ndarray:
    """Noise-free diurnal curve for one group: amplitude * exp(-(m-peak)^2 / 2w^2)."""
    m = np.arange(slots, dtype=np.float64)
    return spec.amplitude * np.exp(-((m - spec.peak_slot) ** 2) / (2.0 * spec.width**2))


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[RawSeriesTable, np.ndarray]:
    """Draw a synthetic table plus the true group label of every day.

    Each day is its group's bell profile plus iid Gaussian slot noise,
    clipped at zero since generation cannot be negative. Deterministic per
    seed; with noise 0 the rows equal the closed-form profile exactly.
    """
    rng = np.random.default_rng(seed)
    rows, labels, day_ids = [], [], []
    day = 0
    for ci, cluster in enumerate(spec.clusters):
        profile = bell_profile(cluster, spec.slots)
        for _ in range(cluster.days):
            values = profile.copy()
            if cluster.noise > 0:
                values = values + rng.normal(0.0, cluster.noise, size=spec.slots)
            rows.append(np.maximum(values, 0.0))
            labels.append(ci)
            day_ids.append(f"d{day:05d}")
            day += 1
    table = RawSeriesTable(np.array(rows), slot_labels_for(spec), day_ids)
    return table, np.array(labels, dtype=np.int64)


def load_csv(path: str) -> RawSeriesTable:
    """Read a table: header row naming slots, then one day per row.

    First column is the day id, remaining columns are numeric kW values.
    Ragged rows and non-numeric cells are reported with row and column.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FileNotFoundError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty table") from None
        slot_labels = [h.strip() for h in header[1:]]
        m = len(slot_labels)
        day_ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != m + 1:
                raise ValueError(
                    f"{path}: ragged row at line {lineno}: "
                    f"expected {m + 1} cells, found {len(row)}"
                )
            day_ids.append(row[0])
            parsed = []
            for col, cell in enumerate(row[1:], start=2):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell at line {lineno}, column {col}: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: empty table")
    return RawSeriesTable(np.array(rows), slot_labels, day_ids)


def save_csv(table: RawSeriesTable, path: str) -> None:
    """Inverse of load_csv; floats written with repr so reload is exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day_id", *table.slot_labels])
        for day_id, row in zip(table.day_ids, table.values):
            writer.writerow([day_id, *[repr(float(v)) for v in row]])


def _check_range(name: str, rng_: SlotRange, n_slots: int) -> None:
    start, stop = rng_
    if not (0 <= start < stop <= n_slots):
        raise ValueError(
            f"{name} slot range [{start}, {stop}) out of range for {n_slots} slots"
        )


def make_windows(
    table: RawSeriesTable,
    input_slots: SlotRange,
    output_slots: SlotRange,
) -> SupervisedDataset:
    """Slice every day into one (input, target) pair.

    Ranges are half-open slot index intervals; the input range must come
    before the target range and they may not overlap.
    """
    _check_range("input", input_slots, table.n_slots)
    _check_range("output", output_slots, table.n_slots)
    if input_slots[1] > output_slots[0]:
        raise ValueError(
            f"input range [{input_slots[0]}, {input_slots[1]}) overlaps or follows "
            f"output range [{output_slots[0]}, {output_slots[1]})"
        )
    return SupervisedDataset(
        inputs=table.values[:, input_slots[0]:input_slots[1]].copy(),
        targets=table.values[:, output_slots[0]:output_slots[1]].copy(),
        day_ids=list(table.day_ids),
        target_slot_labels=table.slot_labels[output_slots[0]:output_slots[1]],
    )


def split(
    dataset: SupervisedDataset, train_fraction: float, seed: int
) -> tuple[SupervisedDataset, SupervisedDataset]:
    """Seeded shuffle-split into floor(S * fraction) train rows and the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    s = dataset.n_samples
    if s < 2:
        raise ValueError("need at least 2 samples to split")
    order = np.random.default_rng(seed).permutation(s)
    n_train = int(math.floor(s * train_fraction))
    return dataset.take(np.sort(order[:n_train])), dataset.take(np.sort(order[n_train:]))


def fit_apply_scaler(
    train: SupervisedDataset, test: SupervisedDataset, mode: str = "global"
) -> tuple[SupervisedDataset, SupervisedDataset, Scaler]:
    """Fit on the training rows only, then map both sets onto train's range."""
    scaler = Scaler(mode).fit(train)
    return scaler.transform(train), scaler.transform(test), scaler
