import numpy as np
import pytest

from app.schemas.camera import FisheyeIntrinsics
from app.schemas.quad import QuadParams
from app.services.track_service import get_intrinsics, get_track


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo and closed-loop tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo or closed-loop test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def gate_map():
    return get_track("track_ratm")


@pytest.fixture
def intrinsics():
    return get_intrinsics()


@pytest.fixture
def pinhole():
    """Distortion-free camera with the bundled image size."""
    return FisheyeIntrinsics(fx=286.0, fy=286.0, cx=424.0, cy=400.0, width=848, height=800)


@pytest.fixture
def quad_params():
    return QuadParams()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
