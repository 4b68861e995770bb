"""Shared seeded generators for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from lpmix.measures import DiscreteMeasure
from lpmix.mixtures import RandomMeasure
from lpmix.rng import stream


def random_measure(rng: np.random.Generator, max_atoms: int = 6,
                   span: float = 3.0) -> DiscreteMeasure:
    """Random finite measure with 1..max_atoms distinct rounded atoms."""
    n = int(rng.integers(1, max_atoms + 1))
    points = np.unique(np.round(rng.uniform(-span, span, n), 3))
    weights = rng.random(points.size) + 0.05
    weights /= weights.sum()
    return DiscreteMeasure(points, weights)


def random_centered_measure(rng: np.random.Generator, max_atoms: int = 6,
                            span: float = 3.0) -> DiscreteMeasure:
    """Centered variant: needs at least two atoms, mean shifted to zero."""
    n = int(rng.integers(2, max_atoms + 1))
    points = np.unique(np.round(rng.uniform(-span, span, n), 3))
    while points.size < 2:
        points = np.unique(np.round(rng.uniform(-span, span, 2), 3))
    weights = rng.random(points.size) + 0.05
    weights /= weights.sum()
    points = points - float(np.sum(weights * points))
    return DiscreteMeasure(points, weights)


def random_mixture(rng: np.random.Generator, max_components: int = 3,
                   centered: bool = True, max_atoms: int = 5) -> RandomMeasure:
    n = int(rng.integers(1, max_components + 1))
    maker = random_centered_measure if centered else random_measure
    laws = tuple(maker(rng, max_atoms=max_atoms) for _ in range(n))
    weights = rng.random(n) + 0.1
    weights /= weights.sum()
    return RandomMeasure(weights, laws)


@pytest.fixture
def rng():
    return stream(20240817, "tests")


def two_scale_mixture() -> RandomMeasure:
    return RandomMeasure.from_components([
        (0.5, DiscreteMeasure.rademacher(1.0)),
        (0.5, DiscreteMeasure.rademacher(2.0)),
    ])
