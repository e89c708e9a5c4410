"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from otafl.data import Dataset, PartitionSpec, generate_synthetic, partition
from otafl.types import UserShard


def make_shards(
    rng: np.random.Generator,
    n_users: int = 4,
    per_user: int = 30,
    dim: int = 5,
    noise_std: float = 0.5,
) -> list[UserShard]:
    dataset = generate_synthetic(dim, n_users * per_user, noise_std, rng)
    return partition(dataset, PartitionSpec("iid", n_users), rng)


def single_shard(rng: np.random.Generator, n_samples: int = 40, dim: int = 4) -> UserShard:
    dataset = generate_synthetic(dim, n_samples, 0.3, rng)
    return UserShard(user_id=1, features=dataset.features, targets=dataset.targets)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
