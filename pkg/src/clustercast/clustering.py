"""K-means over day rows with Euclidean distance.

Groups days into customer types so each group can get its own predictor.
Initial centers are sampled uniformly from the rows (seeded); a k-means++
initializer is available behind a flag. Iteration stops once assignments
are stable or the iteration cap is reached.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class ClusterModel:
    centers: np.ndarray         # (n, M)
    assignments: np.ndarray     # (N,) ints in [0, n)
    counts: np.ndarray          # (n,)
    iterations_run: int

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]


def euclidean_distance(x: np.ndarray, c: np.ndarray) -> float:
    """sqrt of the summed squared slot differences between two day rows."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {c.shape}")
    return float(np.sqrt(np.sum((x - c) ** 2)))


def _distance_matrix(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (N, n) matrix of row-to-center Euclidean distances
    diff = X[:, None, :] - centers[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def assign(x: np.ndarray, centers: np.ndarray) -> int:
    """Index of the nearest center; ties go to the lowest index."""
    if centers.shape[0] < 1:
        raise ValueError("need at least one center")
    d = np.sqrt(np.sum((centers - np.asarray(x, dtype=np.float64)) ** 2, axis=1))
    return int(np.argmin(d))


def assign_all(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.argmin(_distance_matrix(X, centers), axis=1)


def update_centers(
    X: np.ndarray,
    assignments: np.ndarray,
    n: int,
    prev_centers: np.ndarray | None = None,
) -> np.ndarray:
    """Center j becomes the mean of the rows assigned to j.

    An empty cluster is re-seeded to the row farthest from its current
    center (ties to the lowest row index), which keeps n fixed and is
    deterministic; that repair needs prev_centers.
    """
    X = np.asarray(X, dtype=np.float64)
    assignments = np.asarray(assignments)
    if assignments.shape[0] != X.shape[0]:
        raise ValueError("one assignment per row required")
    if assignments.size and (assignments.min() < 0 or assignments.max() >= n):
        raise ValueError("assignment index out of range")
    centers = np.empty((n, X.shape[1]), dtype=np.float64)
    for j in range(n):
        members = assignments == j
        if members.any():
            centers[j] = X[members].mean(axis=0)
        elif prev_centers is not None:
            far = np.argmax(np.sum((X - prev_centers[j]) ** 2, axis=1))
            centers[j] = X[far]
        else:
            raise ValueError(f"cluster {j} is empty and no previous centers were given")
    return centers


def _init_sample(X: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(X.shape[0], size=n, replace=False)
    return X[idx].copy()


def _init_plusplus(X: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    # D^2 sampling: next center drawn proportionally to squared distance
    # from the nearest already-chosen center.
    centers = np.empty((n, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(X.shape[0])]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, n):
        total = d2.sum()
        if total == 0:
            centers[j] = X[rng.integers(X.shape[0])]
        else:
            centers[j] = X[rng.choice(X.shape[0], p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def kmeans_fit(
    X: np.ndarray,
    n: int,
    seed: int,
    max_iterations: int = 100,
    init: str = "sample",
) -> ClusterModel:
    """Alternate assignment and center updates until assignments stop changing."""
    X = np.asarray(X, dtype=np.float64)
    if n < 1:
        raise ValueError("need n >= 1 clusters")
    if X.shape[0] < n:
        raise ValueError(f"cannot form {n} clusters from {X.shape[0]} rows")
    rng = np.random.default_rng(seed)
    if init == "sample":
        centers = _init_sample(X, n, rng)
    elif init == "plusplus":
        centers = _init_plusplus(X, n, rng)
    else:
        raise ValueError(f"unknown init {init!r}")

    assignments = assign_all(X, centers)
    centers = update_centers(X, assignments, n, prev_centers=centers)
    iterations = 1
    while iterations < max_iterations:
        new_assignments = assign_all(X, centers)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        centers = update_centers(X, assignments, n, prev_centers=centers)
        iterations += 1

    counts = np.bincount(assignments, minlength=n)
    return ClusterModel(centers, assignments, counts, iterations)


def relabel_by_peak(model: ClusterModel) -> ClusterModel:
    """Renumber clusters by descending center peak so labels are stable across seeds.

    Cluster 0 becomes the group with the highest center value. This is a
    naming heuristic for report readability, not ground truth.
    """
    peaks = model.centers.max(axis=1)
    order = np.argsort(-peaks, kind="stable")
    remap = np.empty(model.n_clusters, dtype=np.int64)
    remap[order] = np.arange(model.n_clusters)
    return ClusterModel(
        centers=model.centers[order].copy(),
        assignments=remap[model.assignments],
        counts=model.counts[order].copy(),
        iterations_run=model.iterations_run,
    )


def within_cluster_ss(X: np.ndarray, assignments: np.ndarray, centers: np.ndarray) -> float:
    """Total squared distance of every row to its assigned center."""
    return float(np.sum((X - centers[assignments]) ** 2))


def label_agreement(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Best label-permutation match rate between two cluster labelings."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise ValueError("labelings must have equal length")
    k = int(max(truth.max(), predicted.max())) + 1
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapped = np.array(perm)[predicted]
        best = max(best, float(np.mean(mapped == truth)))
    return best


def save_assignments(path: str, day_ids: list[str], assignments: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day_id", "cluster"])
        for day_id, cluster in zip(day_ids, assignments):
            writer.writerow([day_id, int(cluster)])


def save_centers(path: str, centers: np.ndarray, slot_labels: list[str]) -> None:
    """One row per cluster, M values per row, header naming the slots."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(slot_labels)
        for row in centers:
            writer.writerow([repr(float(v)) for v in row])
