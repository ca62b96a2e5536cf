"""Shared tiny fixtures: a saved checkpoint, shape/histogram pools, healthy slices.

Everything here is sized for speed (patch 16, size-64 phantoms); the
acceptance suite builds its own full-size artifacts.
"""

import numpy as np
import pytest

from lesionforge import lsf
from lesionforge.data import build_phantom_dataset
from lesionforge.nn.discriminator import DiscriminatorConfig
from lesionforge.nn.generator import GeneratorConfig
from lesionforge.phantoms import config_for_size, healthy_config
from lesionforge.training import TrainConfig, init_state, save_train_state

TINY_PATCH = 16
TINY_GEN = GeneratorConfig(patch_size=TINY_PATCH, base_channels=4, bridge_units=8)
TINY_DISC = DiscriminatorConfig(patch_size=TINY_PATCH, channel_schedule=((4, 2), (8, 1)))


def blob_mask(seed: int, p: int = TINY_PATCH) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:p, :p]
    cy, cx = p / 2 + rng.uniform(-1, 1), p / 2 + rng.uniform(-1, 1)
    r = rng.uniform(p * 0.18, p * 0.28)
    return (((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r).astype(np.uint8)


@pytest.fixture(scope="session")
def tiny_store(tmp_path_factory):
    """Checkpoint store + shape pool + healthy slices, as the service wants them."""
    root = tmp_path_factory.mktemp("store")
    state = init_state(TINY_GEN, TINY_DISC, seed=0)
    save_train_state(root / "checkpoints" / "final", state, TrainConfig(seed=0))

    shapes = root / "shapes"
    shapes.mkdir()
    for i in range(3):
        lsf.write_lsf(shapes / f"mask_{i}.lsf", blob_mask(i).astype(np.float32))

    build_phantom_dataset(root / "healthy", 3, seed=40, config=healthy_config(config_for_size(64)))
    return root
