"""Cross-group knowledge transfer by blending trained parameter sets.

Every group keeps its own trained predictor. For a chosen target group, a
particle swarm searches over (a) a binary mask picking which other groups'
parameter sets to reuse and (b) a coefficient in [-1, 1] per picked set.
A candidate is scored by the kW-scale training RMSE of the blended
predictor on the target group's training data. The target's own entry is
pinned to "selected, coefficient 1", so the all-zero position reproduces
the target's trained parameters exactly and the search can only improve on
them; if it never does, the original parameters are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import SupervisedDataset
from .predictor import ParameterSet, forward, rmse


@dataclass
class TransferSolution:
    """Selection mask and blend coefficients, one entry per group."""

    mask: np.ndarray            # (n,) ints in {0, 1}
    coefficients: np.ndarray    # (n,) floats in [-1, 1]
    target: int

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int64)
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.mask.shape != self.coefficients.shape:
            raise ValueError("mask and coefficients must have equal length")


def identity_solution(target: int, n: int) -> TransferSolution:
    """Selects only the target with coefficient 1: a no-op blend."""
    mask = np.zeros(n, dtype=np.int64)
    coeff = np.ones(n)
    mask[target] = 1
    return TransferSolution(mask, coeff, target)


def decode(position: np.ndarray, target: int, n: int) -> TransferSolution:
    """Map a PSO position onto (mask, coefficients) for one target group.

    The position has 2(n-1) entries: first the mask coordinates of the
    non-target groups in ascending index order (selected iff > 0), then
    their coefficients. The target's own entries are forced to 1.
    """
    position = np.asarray(position, dtype=np.float64)
    if not 0 <= target < n:
        raise ValueError(f"target {target} out of range for {n} groups")
    if position.shape != (2 * (n - 1),):
        raise ValueError(
            f"expected a position of length {2 * (n - 1)}, got {position.shape}"
        )
    others = [k for k in range(n) if k != target]
    mask = np.ones(n, dtype=np.int64)
    coeff = np.ones(n)
    for slot, k in enumerate(others):
        mask[k] = 1 if position[slot] > 0.0 else 0
        coeff[k] = position[len(others) + slot]
    return TransferSolution(mask, coeff, target)


def blend(trained: list[ParameterSet], sol: TransferSolution) -> ParameterSet:
    """Coordinate-wise sum of the selected parameter sets times their coefficients."""
    if len(trained) != sol.mask.shape[0]:
        raise ValueError("one mask entry per trained parameter set required")
    ref = trained[0]
    for p in trained[1:]:
        if p.kind != ref.kind or p.hidden != ref.hidden:
            raise ValueError("all parameter sets must share kind and hidden size")
    flat = np.zeros(ref.size)
    for k, params in enumerate(trained):
        if sol.mask[k]:
            flat += sol.coefficients[k] * params.flatten()
    return ParameterSet.from_flat(ref.kind, ref.hidden, flat)


def evaluate_solution(sol: TransferSolution, trained: list[ParameterSet],
                      data: SupervisedDataset) -> float:
    """kW-scale training RMSE of the blended predictor on the target data."""
    params = blend(trained, sol)
    try:
        out = forward(params.kind, params, data.inputs, data.targets.shape[1])
    except FloatingPointError:
        return math.inf
    if data.scaler is not None:
        out = data.scaler.inverse_targets(out)
        y = data.scaler.inverse_targets(data.targets)
    else:
        y = data.targets
    loss = rmse(y, out)
    return loss if math.isfinite(loss) else math.inf


def evaluate_particle(position: np.ndarray, target: int,
                      trained: list[ParameterSet],
                      data: SupervisedDataset) -> float:
    """Fitness of one particle position; non-finite forecasts score +inf."""
    return evaluate_solution(decode(position, target, len(trained)), trained, data)


@dataclass
class PsoConfig:
    particles: int = 15
    generations: int = 100
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    v_max: float = 0.4
    u_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("need at least one particle")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.v_max <= 0 or self.u_max <= 0:
            raise ValueError("v_max and u_max must be positive")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest: np.ndarray
    pbestval: float
    rng: np.random.Generator


@dataclass
class Swarm:
    particles: list[Particle]
    gbest: np.ndarray
    gbestval: float
    generation: int
    cfg: PsoConfig


Evaluator = Callable[[np.ndarray], float]


def init_swarm(dim: int, cfg: PsoConfig, evaluator: Evaluator,
               initial_gbest: np.ndarray | None = None,
               initial_gbestval: float = math.inf) -> Swarm:
    """Seeded start: every particle owns its own RNG sub-stream.

    Positions are uniform in [-u_max, u_max], velocities in [-v_max, v_max].
    All particles are evaluated once (this is the first evaluation round)
    and the swarm best is taken against initial_gbestval.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.particles)
    particles = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        u = rng.uniform(-cfg.u_max, cfg.u_max, size=dim)
        v = rng.uniform(-cfg.v_max, cfg.v_max, size=dim)
        particles.append(Particle(u, v, u.copy(), evaluator(u), rng))
    gbest = (initial_gbest.copy() if initial_gbest is not None
             else np.zeros(dim))
    swarm = Swarm(particles, gbest, initial_gbestval, 1, cfg)
    for p in particles:
        if p.pbestval < swarm.gbestval:
            swarm.gbestval = p.pbestval
            swarm.gbest = p.pbest.copy()
    return swarm


def pso_step(swarm: Swarm, evaluator: Evaluator) -> Swarm:
    """One synchronous generation.

    Velocity pulls toward each particle's own best and the swarm best from
    the previous generation, with per-particle per-dimension random factors
    from the particle's stream; velocity and position are clamped to
    +/- v_max and +/- u_max. Best updates happen after every particle has
    been evaluated, in fixed particle order, so a concurrent evaluation
    schedule cannot change the result.
    """
    cfg = swarm.cfg
    gbest_prev = swarm.gbest.copy()
    losses = []
    for p in swarm.particles:
        dim = p.position.shape[0]
        r1 = p.rng.uniform(0.0, 1.0, size=dim)
        r2 = p.rng.uniform(0.0, 1.0, size=dim)
        v = (cfg.inertia * p.velocity
             + cfg.cognitive * r1 * (p.pbest - p.position)
             + cfg.social * r2 * (gbest_prev - p.position))
        p.velocity = np.clip(v, -cfg.v_max, cfg.v_max)
        p.position = np.clip(p.position + p.velocity, -cfg.u_max, cfg.u_max)
        losses.append(evaluator(p.position))
    for p, loss in zip(swarm.particles, losses):
        if loss < p.pbestval:
            p.pbestval = loss
            p.pbest = p.position.copy()
        if p.pbestval < swarm.gbestval:
            swarm.gbestval = p.pbestval
            swarm.gbest = p.pbest.copy()
    swarm.generation += 1
    return swarm


@dataclass
class TransferResult:
    params: ParameterSet
    predictions: np.ndarray          # kW-scale forecasts on the training data
    trace: list[float]               # swarm best per evaluation round, starts at the no-blend loss
    solution: TransferSolution
    baseline_rmse: float             # training RMSE of the unblended target predictor
    train_rmse: float                # training RMSE of the returned parameters
    improved: bool


def run_transfer(target: int, trained: list[ParameterSet],
                 data: SupervisedDataset, pso_cfg: PsoConfig) -> TransferResult:
    """Search blends for one target group and keep the best of blend vs original.

    The swarm best starts at the target's own training RMSE (the identity
    blend), so the trace is non-increasing from that value and the returned
    parameters never score worse than the unblended ones. With zero
    generations nothing is evaluated and the original parameters come back.
    """
    n = len(trained)
    if not 0 <= target < n:
        raise ValueError(f"target {target} out of range for {n} groups")
    dim = 2 * (n - 1)
    baseline = evaluate_particle(np.zeros(dim), target, trained, data)
    trace = [baseline]

    improved = False
    final = trained[target].copy()
    solution = identity_solution(target, n)
    if pso_cfg.generations > 0:
        evaluator = lambda u: evaluate_particle(u, target, trained, data)
        swarm = init_swarm(dim, pso_cfg, evaluator,
                           initial_gbest=np.zeros(dim),
                           initial_gbestval=baseline)
        trace.append(swarm.gbestval)
        for _ in range(pso_cfg.generations - 1):
            pso_step(swarm, evaluator)
            trace.append(swarm.gbestval)
        if swarm.gbestval < baseline:
            improved = True
            solution = decode(swarm.gbest, target, n)
            final = blend(trained, solution)

    t_out = data.targets.shape[1]
    predictions = forward(final.kind, final, data.inputs, t_out)
    if data.scaler is not None:
        predictions = data.scaler.inverse_targets(predictions)
    return TransferResult(
        params=final,
        predictions=predictions,
        trace=trace,
        solution=solution,
        baseline_rmse=baseline,
        train_rmse=trace[-1] if pso_cfg.generations > 0 else baseline,
        improved=improved,
    )
