"""Training-data-volume study: how much solver-generated data each
surrogate needs.

A pool of solver samples at uniform-random flow rates is split 8:2 into
train and test sets; the knowledge surrogate (adjacency fixed), the
knowledge surrogate with trainable adjacency, and the vanilla MLP are
each trained on growing fractions of the train set and scored by test
MAE against the solver outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import mae
from .errors import PoolTooSmallError
from .hall import HallLayout, build_adjacency
from .mlp import fit_standardizer, init_mlp, mlp_forward, mlp_train
from .optim import Bounds, TrainConfig
from .solver import OperatingState, Scenario, ZonalSolver
from .surrogate import (
    TrainableAdjacencyWeights,
    TrainingSample,
    forward,
    forward_trainable,
    init_weights,
    train,
    train_trainable,
)

KNOWLEDGE_FIXED = "knowledge-fixed"
KNOWLEDGE_TRAINABLE = "knowledge-trainable"
VANILLA = "vanilla"

MLP_TRAIN = TrainConfig(learning_rate=0.01)  # 0.1 is too hot for a deep net


@dataclass(frozen=True)
class StudyCell:
    fraction: float
    surrogate: str
    test_mae: float
    n_train: int


def build_pool(scenario: Scenario, state: OperatingState, pool_size: int,
               bounds: Bounds, seed: int) -> list[TrainingSample]:
    """Solver samples at flow rates drawn uniformly over the box."""
    if pool_size < 10:
        raise PoolTooSmallError(f"pool of {pool_size} is too small to split")
    rng = np.random.default_rng(seed)
    solver = ZonalSolver(scenario)
    pool = []
    for _ in range(pool_size):
        alpha = rng.uniform(bounds.lower, bounds.upper, scenario.layout.n_servers)
        x = state.to_input(alpha)
        pool.append(TrainingSample(input=x, target=solver.solve(x)))
    return pool


def run_datavolume_study(scenario: Scenario, state: OperatingState,
                         fractions: list[float], pool_size: int, seed: int,
                         bounds: Bounds = Bounds(0.01, 3.0),
                         cut_threshold: float = 0.01,
                         train_cfg: TrainConfig = TrainConfig()) -> list[StudyCell]:
    """Train all three surrogates at every fraction; returns one cell per
    (fraction, surrogate) pair."""
    layout: HallLayout = scenario.layout
    pool = build_pool(scenario, state, pool_size, bounds, seed)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pool))
    n_train = int(round(0.8 * len(pool)))
    train_pool = [pool[i] for i in perm[:n_train]]
    test_pool = [pool[i] for i in perm[n_train:]]

    priors = build_adjacency(layout, cut_threshold)
    n = layout.n_sensors

    def test_mae(predict) -> float:
        return float(np.mean([mae(predict(s.input), s.target) for s in test_pool]))

    cells: list[StudyCell] = []
    for fraction in fractions:
        k = int(round(fraction * len(train_pool)))
        if k < 1:
            raise PoolTooSmallError(
                f"fraction {fraction} of {len(train_pool)} training samples is empty")
        subset = train_pool[:k]

        w = train(init_weights(n), priors, subset, train_cfg)
        cells.append(StudyCell(fraction, KNOWLEDGE_FIXED,
                               test_mae(lambda x: forward(w, priors, x)), k))

        tw0 = TrainableAdjacencyWeights(linear=init_weights(n),
                                        w_cs=priors.w_cs.copy(), w_ss=priors.w_ss.copy())
        tw = train_trainable(tw0, priors.hot_mask, subset, train_cfg)
        cells.append(StudyCell(fraction, KNOWLEDGE_TRAINABLE,
                               test_mae(lambda x: forward_trainable(tw, priors.hot_mask, x)), k))

        mw = init_mlp(2 * layout.n_cracs + 2 * layout.n_servers, n, seed=seed)
        mw = fit_standardizer(mw, subset)
        mw = mlp_train(mw, subset, MLP_TRAIN)
        cells.append(StudyCell(fraction, VANILLA,
                               test_mae(lambda x: mlp_forward(mw, x)), k))
    return cells
