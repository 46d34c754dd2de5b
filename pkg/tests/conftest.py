import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.simulator import (DetectorNoise, ObjectPathSpec, ObjectSpec, SceneConfig,  # noqa: E402
                           generate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """Short scene with two moving objects and sparse landmarks"""
    return SceneConfig(
        name='small',
        frames=20,
        landmark_count=400,
        objects=(
            ObjectSpec(size=(60.0, 50.0), z_order=1,
                       path=ObjectPathSpec(kind='bounce', start=(120.0, 100.0), velocity=(3.0, 2.0))),
            ObjectSpec(size=(50.0, 40.0), z_order=0,
                       path=ObjectPathSpec(kind='line', start=(360.0, 260.0), velocity=(-2.0, 0.0))),
        ),
    )


@pytest.fixture
def static_config():
    """No objects, no detector noise"""
    return SceneConfig(
        name='static',
        frames=15,
        landmark_count=400,
        detector_noise=DetectorNoise(sigma_center=0.0, sigma_size=0.0, p_miss=0.0, p_false=0.0),
    )


@pytest.fixture
def small_scene(small_config):
    return generate(small_config, seed=3)
