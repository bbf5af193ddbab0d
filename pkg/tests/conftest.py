import dataclasses

import numpy as np
import pytest

from octcalib import board as board_mod
from octcalib import sim as sim_mod


@pytest.fixture(scope="session")
def spec():
    return board_mod.BoardSpec()


@pytest.fixture(scope="session")
def cfg():
    return sim_mod.ScenarioConfig(rng_seed=7)


@pytest.fixture(scope="session")
def quiet_cfg(cfg):
    return cfg.with_zero_noise()


@pytest.fixture(scope="session")
def small_sphere_cfg():
    """Sphere scenario at reduced volume resolution for scan tests."""
    return dataclasses.replace(
        sim_mod.ScenarioConfig(rng_seed=7),
        volume_dims=(64, 64, 64),
        volume_spacing=(2.66 / 64, 10.0 / 64, 10.0 / 64),
        surface_model=sim_mod.SurfaceModel(kind="sphere"))


def random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
