import math

import numpy as np
import pytest

from clustercast.dataset import SupervisedDataset, fit_apply_scaler
from clustercast.predictor import ParameterSet, forward, init_params, rmse
from clustercast.transfer import (
    PsoConfig,
    TransferSolution,
    blend,
    decode,
    evaluate_particle,
    identity_solution,
    init_swarm,
    pso_step,
    run_transfer,
)


def scalar_params(value, kind="rnn", hidden=2):
    base = init_params(kind, hidden, seed=0)
    return ParameterSet.from_flat(kind, hidden, np.full(base.size, float(value)))


def trained_sets(n, hidden=3, kind="rnn"):
    return [init_params(kind, hidden, seed=100 + k) for k in range(n)]


def make_data(seed=0, s=12, t_in=4, t_out=3, scaled=True):
    rng = np.random.default_rng(seed)
    ds = SupervisedDataset(rng.uniform(0, 30, size=(s, t_in)),
                           rng.uniform(0, 30, size=(s, t_out)))
    if not scaled:
        return ds
    train_s, _, _ = fit_apply_scaler(ds, ds)
    return train_s


class TestDecode:
    def test_all_zero_position_is_identity(self):
        sol = decode(np.zeros(6), target=0, n=4)
        assert sol.mask.tolist() == [1, 0, 0, 0]
        assert sol.coefficients[0] == 1.0

    def test_sign_rule(self):
        position = np.array([0.3, -0.2, 0.9, 0.5, 0.5, 0.5])
        sol = decode(position, target=0, n=4)
        assert sol.mask.tolist() == [1, 1, 0, 1]

    def test_target_entries_forced(self):
        position = np.array([-1.0, -1.0, -0.7, 0.2])
        sol = decode(position, target=1, n=3)
        assert sol.mask[1] == 1 and sol.coefficients[1] == 1.0

    def test_coefficients_copied_in_order(self):
        position = np.array([1.0, 1.0, -0.25, 0.75])
        sol = decode(position, target=1, n=3)
        assert sol.coefficients[0] == -0.25 and sol.coefficients[2] == 0.75

    def test_matches_sign_threshold_oracle(self):
        rng = np.random.default_rng(0)
        n = 5
        for _ in range(100):
            target = int(rng.integers(n))
            position = rng.uniform(-1, 1, size=2 * (n - 1))
            sol = decode(position, target, n)
            others = [k for k in range(n) if k != target]
            for slot, k in enumerate(others):
                expected = 1 if position[slot] > 0 else 0
                assert sol.mask[k] == expected
                assert sol.coefficients[k] == position[n - 1 + slot]

    def test_threshold_zero_decodes_unselected(self):
        sol = decode(np.zeros(4), target=2, n=3)
        assert sol.mask.tolist() == [0, 0, 1]

    def test_sign_scale_invariance(self):
        rng = np.random.default_rng(1)
        position = rng.uniform(-1, 1, size=6)
        scaled = position.copy()
        scaled[:3] *= 17.5
        a = decode(position, target=0, n=4)
        b = decode(scaled, target=0, n=4)
        assert np.array_equal(a.mask, b.mask)

    def test_wrong_dimension_rejected(self):
        with pytest.raises(ValueError):
            decode(np.zeros(5), target=0, n=4)


class TestBlend:
    def test_identity_blend_reproduces_target_exactly(self):
        trained = trained_sets(4)
        out = blend(trained, identity_solution(2, 4))
        assert np.array_equal(out.flatten(), trained[2].flatten())

    def test_two_scalar_sets_halved(self):
        trained = [scalar_params(2.0), scalar_params(4.0)]
        sol = TransferSolution(np.array([1, 1]), np.array([0.5, 0.5]), target=0)
        out = blend(trained, sol)
        assert (out.flatten() == 3.0).all()

    def test_masked_out_coefficient_is_ignored(self):
        trained = [scalar_params(2.0), scalar_params(1000.0)]
        sol = TransferSolution(np.array([1, 0]), np.array([1.0, -0.9]), target=0)
        assert (blend(trained, sol).flatten() == 2.0).all()

    def test_matches_coordinate_oracle(self):
        rng = np.random.default_rng(2)
        trained = trained_sets(3)
        for _ in range(25):
            mask = rng.integers(0, 2, size=3)
            coeff = rng.uniform(-1, 1, size=3)
            sol = TransferSolution(mask, coeff, target=0)
            got = blend(trained, sol).flatten()
            expected = np.zeros_like(got)
            for k in range(3):
                if mask[k]:
                    expected = expected + coeff[k] * trained[k].flatten()
            assert np.max(np.abs(got - expected)) < 1e-12

    def test_linearity_in_coefficients(self):
        trained = trained_sets(3)
        mask = np.array([1, 1, 1])
        a1 = np.array([0.3, -0.2, 0.5])
        a2 = np.array([0.1, 0.4, -0.3])
        out_sum = blend(trained, TransferSolution(mask, a1 + a2, 0)).flatten()
        parts = (blend(trained, TransferSolution(mask, a1, 0)).flatten()
                 + blend(trained, TransferSolution(mask, a2, 0)).flatten())
        assert np.max(np.abs(out_sum - parts)) < 1e-12

    def test_shape_mismatch_rejected(self):
        bad = [init_params("rnn", 3, 0), init_params("rnn", 4, 0)]
        with pytest.raises(ValueError):
            blend(bad, identity_solution(0, 2))


class TestEvaluateParticle:
    def test_identity_equals_plain_forward_loss(self):
        trained = trained_sets(4)
        data = make_data()
        got = evaluate_particle(np.zeros(6), 1, trained, data)
        out = forward("rnn", trained[1], data.inputs, data.targets.shape[1])
        want = rmse(data.scaler.inverse_targets(data.targets),
                    data.scaler.inverse_targets(out))
        assert got == want

    def test_non_negative(self):
        trained = trained_sets(3)
        data = make_data(3)
        rng = np.random.default_rng(4)
        for _ in range(10):
            val = evaluate_particle(rng.uniform(-1, 1, 4), 0, trained, data)
            assert val >= 0.0

    def test_composition_oracle(self):
        trained = trained_sets(3)
        data = make_data(5)
        position = np.array([0.6, -0.4, 0.8, -0.2])
        got = evaluate_particle(position, 2, trained, data)
        sol = decode(position, 2, 3)
        params = blend(trained, sol)
        out = forward("rnn", params, data.inputs, data.targets.shape[1])
        want = rmse(data.scaler.inverse_targets(data.targets),
                    data.scaler.inverse_targets(out))
        assert got == want

    def test_unscaled_data_supported(self):
        trained = trained_sets(2)
        data = make_data(6, scaled=False)
        val = evaluate_particle(np.zeros(2), 0, trained, data)
        out = forward("rnn", trained[0], data.inputs, data.targets.shape[1])
        assert val == rmse(data.targets, out)

    def test_non_finite_forecast_scores_infinity(self):
        broken = init_params("rnn", 2, seed=0).zeros_like()
        broken.tensors["b_h"] = np.array([1.0, -1.0])
        broken.tensors["W_y"] = np.full((1, 2), np.inf)
        trained = [broken, broken]
        data = make_data(7)
        val = evaluate_particle(np.array([1.0, 1.0]), 0, trained, data)
        assert val == math.inf


class TestPso:
    def test_equilibrium_particle_does_not_move(self):
        cfg = PsoConfig(particles=3, generations=5, seed=0)
        evaluator = lambda u: float(np.sum(u * u))
        swarm = init_swarm(4, cfg, evaluator)
        p = swarm.particles[0]
        p.position = swarm.gbest.copy()
        p.pbest = swarm.gbest.copy()
        p.velocity = np.zeros(4)
        pso_step(swarm, evaluator)
        assert np.array_equal(p.velocity, np.zeros(4))
        assert np.array_equal(p.position, swarm.gbest)

    def test_clamps_respected(self):
        cfg = PsoConfig(particles=10, generations=5, v_max=0.4, u_max=1.0, seed=3)
        evaluator = lambda u: float(np.sum(np.abs(u)))
        swarm = init_swarm(6, cfg, evaluator)
        for _ in range(5):
            pso_step(swarm, evaluator)
            for p in swarm.particles:
                assert np.abs(p.velocity).max() <= 0.4 + 1e-15
                assert np.abs(p.position).max() <= 1.0 + 1e-15

    def test_gbest_non_increasing(self):
        cfg = PsoConfig(particles=8, generations=20, seed=7)
        evaluator = lambda u: float(np.sum((u - 0.3) ** 2))
        swarm = init_swarm(5, cfg, evaluator)
        prev = swarm.gbestval
        for _ in range(20):
            pso_step(swarm, evaluator)
            assert swarm.gbestval <= prev
            prev = swarm.gbestval

    def test_initial_gbestval_caps_swarm_best(self):
        cfg = PsoConfig(particles=5, generations=1, seed=1)
        evaluator = lambda u: 100.0
        swarm = init_swarm(3, cfg, evaluator, initial_gbest=np.zeros(3),
                           initial_gbestval=7.0)
        assert swarm.gbestval == 7.0
        assert np.array_equal(swarm.gbest, np.zeros(3))

    def test_sphere_convergence(self):
        # pre-run pilot: every seed 0..9 ends below 1e-3 on the 6-D sphere
        evaluator = lambda u: float(np.sum(u * u))
        for seed in range(3):
            cfg = PsoConfig(particles=15, generations=100, seed=seed)
            swarm = init_swarm(6, cfg, evaluator)
            for _ in range(99):
                pso_step(swarm, evaluator)
            assert swarm.gbestval < 1e-3


class TestRunTransfer:
    def test_zero_generations_returns_original(self):
        trained = trained_sets(3)
        data = make_data(8)
        cfg = PsoConfig(particles=5, generations=0, seed=0)
        result = run_transfer(1, trained, data, cfg)
        assert np.array_equal(result.params.flatten(), trained[1].flatten())
        assert len(result.trace) == 1
        out = forward("rnn", trained[1], data.inputs, data.targets.shape[1])
        assert np.array_equal(result.predictions,
                              data.scaler.inverse_targets(out))

    def test_trace_length_and_monotonicity(self):
        trained = trained_sets(4)
        data = make_data(9)
        cfg = PsoConfig(particles=6, generations=12, seed=4)
        result = run_transfer(2, trained, data, cfg)
        assert len(result.trace) == 13
        assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
        assert result.trace[0] == result.baseline_rmse

    def test_final_never_worse_than_baseline(self):
        trained = trained_sets(3)
        data = make_data(10)
        for seed in range(4):
            cfg = PsoConfig(particles=5, generations=8, seed=seed)
            result = run_transfer(0, trained, data, cfg)
            assert result.train_rmse <= result.baseline_rmse
            val = evaluate_particle(np.zeros(4), 0, trained, data)
            assert result.baseline_rmse == val

    def test_deterministic_per_seed(self):
        trained = trained_sets(3)
        data = make_data(11)
        cfg = PsoConfig(particles=5, generations=10, seed=21)
        a = run_transfer(1, trained, data, cfg)
        b = run_transfer(1, trained, data, cfg)
        assert a.trace == b.trace
        assert np.array_equal(a.params.flatten(), b.params.flatten())

    def test_returned_params_match_reported_rmse(self):
        trained = trained_sets(4)
        data = make_data(12)
        cfg = PsoConfig(particles=8, generations=15, seed=5)
        result = run_transfer(3, trained, data, cfg)
        out = forward("rnn", result.params, data.inputs, data.targets.shape[1])
        loss = rmse(data.scaler.inverse_targets(data.targets),
                    data.scaler.inverse_targets(out))
        assert abs(loss - result.train_rmse) < 1e-12

    def test_single_group_degenerates_to_identity(self):
        trained = trained_sets(1)
        data = make_data(13)
        cfg = PsoConfig(particles=4, generations=5, seed=0)
        result = run_transfer(0, trained, data, cfg)
        assert not result.improved
        assert np.array_equal(result.params.flatten(), trained[0].flatten())
