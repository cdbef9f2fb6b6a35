"""Shared test helpers: random instance generators with explicit seeding."""

from __future__ import annotations

import numpy as np
import pytest

from wkclust.ot import DiscreteDistribution


def make_distribution(rng, n_points=None, dim=2, max_points=12, spread=1.0, center=None):
    n = int(n_points) if n_points is not None else int(rng.integers(1, max_points + 1))
    offset = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    support = offset + spread * rng.normal(size=(n, dim))
    weights = rng.uniform(0.2, 1.0, size=n)
    weights = weights / weights.sum()
    return DiscreteDistribution(support=support, weights=weights)


def make_dataset(rng, size, dim=2, max_points=12, n_groups=1, group_spread=4.0):
    """Random bag-of-vectors dataset, optionally pulled apart into groups."""
    centers = group_spread * rng.normal(size=(n_groups, dim))
    dataset = []
    labels = []
    for i in range(size):
        g = i % n_groups
        dataset.append(
            make_distribution(rng, dim=dim, max_points=max_points, center=centers[g])
        )
        labels.append(g)
    return dataset, np.asarray(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
