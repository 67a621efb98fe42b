import os
import sys
from typing import Sequence

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import SimulationParameters
from control import MeasurementPolicy
from em_core import Position
from scene import Scene, build_default_panel, deploy_links


def small_scene(frequencies: Sequence[float] = (2.412e9,), seed: int = 0, panels: int = 2,
                rolls: int = 3, multipath_sigma_db: float = 3.0) -> Scene:
    """``panels`` side-by-side panels of ``rolls`` rolls, one link per frequency."""
    built = [
        build_default_panel(i, Position(i * 0.5, 0.0, 1.2), 0.0, roll_count=rolls, template='small')
        for i in range(panels)
    ]
    rng = np.random.default_rng(seed)
    endpoints, links = deploy_links(built, frequencies, rng)
    return Scene(built, endpoints, links, seed, multipath_sigma_db)


@pytest.fixture
def params():
    return SimulationParameters()


@pytest.fixture
def noiseless():
    return MeasurementPolicy(noise_sigma_db=0.0)


@pytest.fixture
def make_scene():
    return small_scene
