"""Single-user local SGD primitive shared by the trainer and pilot runs."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .objectives import GradientOracle
from .types import UserShard

# Initial models are drawn N(0, 5 I_d) by default.
DEFAULT_THETA0_STD = math.sqrt(5.0)

StepFn = Callable[[int], float]


def sgd_step(
    theta: np.ndarray,
    shard: UserShard,
    objective: GradientOracle,
    eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One stochastic step: sample index uniformly, move against its gradient."""
    if eta <= 0:
        raise ValueError("step size must be positive")
    if len(shard) == 0:
        raise ValueError("cannot step on an empty shard")
    i = int(rng.integers(len(shard)))
    return theta - eta * objective.grad(theta, shard.features[i], shard.targets[i])


def local_pass(
    theta: np.ndarray,
    shard: UserShard,
    objective: GradientOracle,
    etas: Sequence[float],
    rng: np.random.Generator,
) -> np.ndarray:
    """Run one SGD step per entry of etas, returning the updated model."""
    for eta in etas:
        theta = sgd_step(theta, shard, objective, eta, rng)
    return theta
