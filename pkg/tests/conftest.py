import numpy as np
import pytest
from hypothesis import settings

from roadsfm.geometry import CameraIntrinsics, Pose

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def K128():
    return CameraIntrinsics(110.0, 110.0, 63.5, 47.5, 128, 96)


@pytest.fixture
def K64():
    return CameraIntrinsics(55.0, 55.0, 31.5, 23.5, 64, 48)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, rot=0.05, trans=0.5) -> Pose:
    return Pose(rng.normal(scale=rot, size=3), rng.normal(scale=trans, size=3))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
