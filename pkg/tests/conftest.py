"""
Test configuration and fixtures
"""

import os

import numpy as np
import pytest

# Set test environment
os.environ.setdefault("EBFLOW_LOG_LEVEL", "WARNING")

from src.fields import StaggeredState, fill_ghost
from src.geometry import NoSurface, PlaneSurface, build_geometry_set
from src.models import BoundarySpec, FlowModel, FluidConstants, GridSpec
from src.physics import hydrostatic_background


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


PERIODIC = BoundarySpec(xlo="periodic", xhi="periodic", ylo="periodic", yhi="periodic",
                        zlo="periodic", zhi="periodic")
CHANNEL = BoundarySpec()


@pytest.fixture
def constants():
    """Dry air without gravity"""
    return FluidConstants(g=0.0)


@pytest.fixture
def periodic_grid():
    return GridSpec(n=(6, 6, 6), extent=(6.0, 6.0, 6.0), periodic=(True, True, True))


@pytest.fixture
def channel_grid():
    """Periodic in x and y, walls in z"""
    return GridSpec(n=(6, 4, 8), extent=(1.5, 1.0, 2.0), periodic=(True, True, False))


@pytest.fixture
def plane_geoms(channel_grid):
    """Flat floor at z = 0.3 cutting the second layer of cells"""
    return build_geometry_set(PlaneSurface((0.0, 0.0, 1.0), (0.0, 0.0, 0.3)), channel_grid)


@pytest.fixture
def open_geoms(periodic_grid):
    return build_geometry_set(NoSurface(), periodic_grid)


def make_state(grid, constants, bcs, model=FlowModel.COMPRESSIBLE, velocity=(0.0, 0.0, 0.0),
               theta=300.0, geoms=None):
    """Background state with a uniform velocity, ghost layers filled"""
    background = hydrostatic_background(theta, constants, grid)
    rho = np.broadcast_to(background.column(background.rho0), grid.shape).copy()
    mom = []
    for a in range(3):
        rho_face = background.column(background.rho0_zface if a == 2 else background.rho0)
        m = np.broadcast_to(rho_face * velocity[a], grid.shape).copy()
        if geoms is not None:
            m[geoms.faces[a].alpha <= 0.0] = 0.0
        mom.append(m)
    state = StaggeredState(grid=grid, model=model, rho=rho, rho_theta=rho * background.column(background.theta0),
                           mom=mom, background=background)
    return fill_ghost(state, bcs)


@pytest.fixture
def state_factory():
    return make_state


@pytest.fixture
def periodic_bcs():
    return PERIODIC


@pytest.fixture
def channel_bcs():
    return CHANNEL
