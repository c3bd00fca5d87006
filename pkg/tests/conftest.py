"""Shared test helpers: seeded samplers for tensors and rotations."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from qtensor2d import tensors


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()


def random_interior_z(rng: np.random.Generator, min_margin: float = 0.02) -> np.ndarray:
    """One component vector with eigenvalue margin at least min_margin."""
    if not 0.0 <= min_margin < 1.0 / 3.0:
        raise ValueError("min_margin must lie in [0, 1/3)")
    while True:
        lam2 = rng.uniform(tensors.EIG_MIN, tensors.EIG_MAX)
        lam3 = rng.uniform(tensors.EIG_MIN, tensors.EIG_MAX)
        lam1 = -lam2 - lam3
        lam = np.array([lam1, lam2, lam3])
        margin = min(lam.min() - tensors.EIG_MIN, tensors.EIG_MAX - lam.max())
        if margin >= min_margin:
            break
    rot = random_rotation(rng)
    return tensors.matrix_to_z(rot @ np.diag(lam) @ rot.T)


def random_interior_batch(
    rng: np.random.Generator, count: int, min_margin: float = 0.02
) -> np.ndarray:
    return np.stack([random_interior_z(rng, min_margin) for _ in range(count)])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)
