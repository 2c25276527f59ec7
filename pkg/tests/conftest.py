import numpy as np
import pytest

from uvexplore.occupancy import OccupancyState, from_states
from uvexplore.sensors import default_uav, default_ugv
from uvexplore.world import GroundTruthWorld

RESOLUTION = 0.3


def _shell(shape, fill):
    grid = np.full(shape, fill, dtype=np.uint8)
    grid[[0, -1], :, :] = OccupancyState.OCCUPIED
    grid[:, [0, -1], :] = OccupancyState.OCCUPIED
    grid[:, :, [0, -1]] = OccupancyState.OCCUPIED
    return grid


@pytest.fixture
def room_grid():
    """
    Factory for tri-state grids of a closed room: an Occupied
    shell around a Free (or `fill`) interior
    """

    def make(shape, fill=OccupancyState.FREE):
        return _shell(shape, fill)

    return make


@pytest.fixture
def make_map():
    def make(grid, resolution=RESOLUTION):
        return from_states(np.asarray(grid, dtype=np.uint8), resolution)

    return make


@pytest.fixture
def room_world():
    """Closed empty box of 14 x 14 x 10 voxels at 0.3 m"""
    occupied = np.zeros((14, 14, 10), dtype=bool)
    occupied[[0, -1], :, :] = True
    occupied[:, [0, -1], :] = True
    occupied[:, :, [0, -1]] = True
    return GroundTruthWorld(occupied, RESOLUTION)


@pytest.fixture
def ugv():
    return default_ugv(rays_h=120, rays_v=8)


@pytest.fixture
def uav():
    return default_uav(rays_h=32, rays_v=24)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
