"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The heavyweight directional benchmark runs last; everything else is desk
scale. Thresholds that are not analytic identities were pinned from
pre-build pilot runs (sphere swarm, group recovery, directional margins).
"""

import math
import os
import time

import numpy as np
import pytest

from clustercast.cli import main
from clustercast.clustering import kmeans_fit, label_agreement, update_centers
from clustercast.config import resolve, validate
from clustercast.dataset import (
    ClusterProfileSpec,
    SyntheticSpec,
    generate_synthetic,
)
from clustercast.harness import aggregate, read_raw_runs, run_experiment
from clustercast.predictor import (
    CELL_KINDS,
    TENSOR_ORDER,
    ParameterSet,
    forward,
    gradient,
    init_params,
    rmse,
)
from clustercast.transfer import (
    PsoConfig,
    TransferSolution,
    blend,
    decode,
    evaluate_particle,
    init_swarm,
    pso_step,
)


def _verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def quick_run(tmp_path_factory):
    """Shared 3-seed quick run over all cell kinds, with emitted reports."""
    out = str(tmp_path_factory.mktemp("quick_run"))
    doc = resolve({"models": list(CELL_KINDS), "seeds": [0, 1, 2],
                   "clustering": {"init": "plusplus"}}, quick=True)
    cfg = validate(doc)
    table, _ = generate_synthetic(cfg.synthetic, cfg.seed)
    result = run_experiment(table, cfg.experiment, out_dir=out)
    return cfg, result, out


def test_gradient_correctness():
    """BPTT vs central finite differences on 20 random small instances per kind."""
    started = time.perf_counter()
    rng = np.random.default_rng(1234)
    worst = 0.0
    for kind in CELL_KINDS:
        for _ in range(20):
            hidden = int(rng.integers(1, 4))        # H <= 3
            t_in = int(rng.integers(1, 5))          # T_in <= 4
            t_out = int(rng.integers(1, 3))         # T_out <= 2
            params = init_params(kind, hidden, seed=int(rng.integers(1 << 30)))
            for name, t in params.tensors.items():
                if name.startswith("b_"):
                    params.tensors[name] = rng.uniform(-0.3, 0.3, size=t.shape)
            X = rng.uniform(0, 1, size=(2, t_in))
            Y = rng.uniform(0, 1, size=(2, t_out))
            grads = gradient(kind, params, X, Y)
            analytic = np.concatenate([grads[n].ravel() for n in TENSOR_ORDER[kind]])

            flat = params.flatten()
            numeric = np.empty_like(flat)
            step = 1e-5
            for i in range(flat.size):
                up, down = flat.copy(), flat.copy()
                up[i] += step
                down[i] -= step
                up_loss = np.mean((forward(kind, ParameterSet.from_flat(
                    kind, hidden, up), X, t_out) - Y) ** 2)
                down_loss = np.mean((forward(kind, ParameterSet.from_flat(
                    kind, hidden, down), X, t_out) - Y) ** 2)
                numeric[i] = (up_loss - down_loss) / (2 * step)
            scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    elapsed = time.perf_counter() - started
    _verdict("gradient-correctness", worst < 1e-4 and elapsed < 10.0,
             f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_identity_blend_consistency(quick_run):
    """Identity decoding reproduces each stored per-group training RMSE."""
    cfg, result, _ = quick_run
    stored = {(r.model, r.cluster, r.seed): r.rmse_kw for r in result.records
              if r.split == "train"}
    worst = 0.0
    checked = 0
    for (kind, seed), arts in result.clustered.items():
        prep = result.prepared[seed]
        trained = [a.pre_params for a in arts]
        n = len(trained)
        for j in range(n):
            loss = evaluate_particle(np.zeros(2 * (n - 1)), j, trained,
                                     prep.clusters[j].train_scaled)
            want = stored[(f"{kind}-percluster", j, seed)]
            worst = max(worst, abs(loss - want))
            checked += 1
    _verdict("identity-blend-consistency", worst <= 1e-12 and checked == 36,
             f"max deviation {worst:.2e} over {checked} groups")


def test_transfer_non_degradation(quick_run):
    """Blended training RMSE never exceeds the per-group RMSE, per emitted rows."""
    _, _, out = quick_run
    records = read_raw_runs(os.path.join(out, "raw_runs.csv"))
    pre = {(r.model.split("-")[0], r.cluster, r.seed): r.rmse_kw
           for r in records if r.model.endswith("-percluster") and r.split == "train"}
    post = {(r.model.split("-")[0], r.cluster, r.seed): r.rmse_kw
            for r in records if r.model.endswith("-blended") and r.split == "train"}
    ok = pre.keys() == post.keys() and len(pre) == 36
    violations = [k for k in pre if post[k] > pre[k]]
    _verdict("transfer-non-degradation", ok and not violations,
             f"{len(pre)} cases, {len(violations)} violations")


def test_pso_sphere_sanity():
    """15 particles reach 1e-3 on the 6-D sphere within 100 generations."""
    started = time.perf_counter()
    wins = 0
    all_non_increasing = True
    sphere = lambda u: float(np.sum(u * u))
    for seed in range(10):
        cfg = PsoConfig(particles=15, generations=100, seed=seed)
        swarm = init_swarm(6, cfg, sphere)
        trace = [swarm.gbestval]
        for _ in range(99):
            pso_step(swarm, sphere)
            trace.append(swarm.gbestval)
        wins += swarm.gbestval < 1e-3
        all_non_increasing &= all(b <= a for a, b in zip(trace, trace[1:]))
    elapsed = time.perf_counter() - started
    _verdict("pso-sphere-sanity",
             wins >= 9 and all_non_increasing and elapsed < 5.0,
             f"{wins}/10 converged, monotone={all_non_increasing}, {elapsed:.1f}s")


def test_kmeans_recovery():
    """Perfect group recovery on noise-light well-separated synthetic days."""
    started = time.perf_counter()
    spec = SyntheticSpec(clusters=[
        ClusterProfileSpec(2.0, 11.0, 3.5, 0.02, 60),
        ClusterProfileSpec(8.0, 11.5, 4.0, 0.08, 19),
        ClusterProfileSpec(25.0, 12.0, 4.5, 0.25, 8),
        ClusterProfileSpec(80.0, 12.5, 5.0, 0.80, 3),
    ])
    table, truth = generate_synthetic(spec, seed=7)
    wins = 0
    for seed in range(10):
        model = kmeans_fit(table.values, 4, seed=seed, init="plusplus")
        wins += label_agreement(truth, model.assignments) == 1.0
    elapsed = time.perf_counter() - started
    _verdict("kmeans-recovery", wins >= 9 and elapsed < 5.0,
             f"{wins}/10 perfect, {elapsed:.1f}s")


def test_oracle_equivalences():
    """Library results match independently coded brute-force oracles."""
    rng = np.random.default_rng(77)
    worst = 0.0

    for _ in range(100):  # rmse: explicit double loop
        s, t = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        y, y_hat = rng.normal(size=(s, t)), rng.normal(size=(s, t))
        total = 0.0
        for a in range(s):
            for b in range(t):
                total += (y[a, b] - y_hat[a, b]) ** 2
        worst = max(worst, abs(rmse(y, y_hat) - math.sqrt(total / (s * t))))

    from clustercast.clustering import euclidean_distance
    for _ in range(100):  # euclidean distance: scalar accumulation
        m = int(rng.integers(1, 30))
        x, c = rng.normal(size=m), rng.normal(size=m)
        total = 0.0
        for a, b in zip(x, c):
            total += (a - b) ** 2
        worst = max(worst, abs(euclidean_distance(x, c) - math.sqrt(total)))

    trained = [init_params("rnn", 3, seed=k) for k in range(4)]
    flats = [p.flatten() for p in trained]
    for _ in range(100):  # blend: coordinate-wise sum
        mask = rng.integers(0, 2, size=4)
        coeff = rng.uniform(-1, 1, size=4)
        got = blend(trained, TransferSolution(mask, coeff, 0)).flatten()
        want = np.zeros_like(got)
        for k in range(4):
            if mask[k] == 1:
                want = want + coeff[k] * flats[k]
        worst = max(worst, float(np.max(np.abs(got - want))))

    for _ in range(100):  # decode: sign rule per coordinate
        n = int(rng.integers(2, 6))
        target = int(rng.integers(n))
        position = rng.uniform(-1, 1, size=2 * (n - 1))
        sol = decode(position, target, n)
        others = [k for k in range(n) if k != target]
        assert sol.mask[target] == 1 and sol.coefficients[target] == 1.0
        for slot, k in enumerate(others):
            assert sol.mask[k] == (1 if position[slot] > 0 else 0)
            worst = max(worst, abs(sol.coefficients[k] - position[n - 1 + slot]))

    for _ in range(100):  # update_centers: per-group running mean
        n_rows, m, n_clusters = int(rng.integers(4, 20)), 3, int(rng.integers(1, 4))
        X = rng.normal(size=(n_rows, m))
        labels = rng.integers(0, n_clusters, size=n_rows)
        prev = rng.normal(size=(n_clusters, m))
        centers = update_centers(X, labels, n_clusters, prev_centers=prev)
        for j in range(n_clusters):
            members = [X[i] for i in range(n_rows) if labels[i] == j]
            if members:
                mean = [sum(row[col] for row in members) / len(members)
                        for col in range(m)]
                worst = max(worst, float(np.max(np.abs(centers[j] - mean))))

    _verdict("oracle-equivalences", worst < 1e-12, f"max deviation {worst:.2e}")


def test_cmd_run_determinism(tmp_path):
    """Two identical run invocations emit byte-identical raw rows."""
    import json
    config = {
        "models": ["rnn"],
        "seeds": [0],
        "figures": False,
        "data": {"synthetic": {"clusters": [
            {"amplitude": 2.0, "peak_slot": 11.0, "width": 3.5, "noise": 0.04, "days": 24},
            {"amplitude": 8.0, "peak_slot": 11.5, "width": 4.0, "noise": 0.16, "days": 10},
            {"amplitude": 25.0, "peak_slot": 12.0, "width": 4.5, "noise": 0.50, "days": 6},
            {"amplitude": 80.0, "peak_slot": 12.5, "width": 5.0, "noise": 1.60, "days": 5},
        ]}},
        "clustering": {"n_clusters": 4, "init": "plusplus"},
        "training": {"baseline": {"hidden": 3, "iterations": 30},
                     "clustered": {"hidden": 3, "iterations": 20}},
        "pso": {"particles": 5, "generations": 4},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    code_a = main(["run", "--config", str(cfg_path), "--out", out_a])
    code_b = main(["run", "--config", str(cfg_path), "--out", out_b])
    bytes_a = open(os.path.join(out_a, "raw_runs.csv"), "rb").read()
    bytes_b = open(os.path.join(out_b, "raw_runs.csv"), "rb").read()
    _verdict("cmd-run-determinism",
             code_a == 0 and code_b == 0 and bytes_a == bytes_b,
             f"{len(bytes_a)} bytes compared")


def test_directional_reproduction():
    """Blended per-group forecasting beats the merged model on most groups.

    Full-scale defaults (4500/3000 iterations, 15 particles, 100
    generations) on the standard synthetic benchmark, five seeds; the
    direction and margins were established by a pre-build pilot run.
    """
    started = time.perf_counter()
    doc = resolve({"models": ["lstm"], "seeds": [0, 1, 2, 3, 4]})
    cfg = validate(doc)
    table, _ = generate_synthetic(cfg.synthetic, cfg.seed)
    result = run_experiment(table, cfg.experiment,
                            log=lambda m: print(f"  {m}", flush=True))
    rows = aggregate(result.records)

    def mean_of(model, cluster):
        return next(r["mean_rmse"] for r in rows
                    if r["model"] == model and r["cluster"] == cluster
                    and r["split"] == "test")

    wins = sum(mean_of("lstm-blended", c) <= mean_of("lstm-merged", c)
               for c in range(4))
    improved = sum(art.transfer.improved
                   for arts in result.clustered.values() for art in arts)
    elapsed = time.perf_counter() - started
    _verdict("directional-reproduction",
             wins >= 3 and improved >= 1 and elapsed < 900.0,
             f"{wins}/4 groups improved, {improved}/20 transfers helped, "
             f"{elapsed / 60:.1f} min")
