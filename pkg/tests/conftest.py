import math

import numpy as np
import pytest
from hypothesis import settings

from hilbundle.manifold import build_model
from hilbundle.partition import ball_cover, build_partition

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def circle():
    return build_model("torus", 1, [TWO_PI], [256])


@pytest.fixture(scope="session")
def circle64():
    return build_model("torus", 1, [TWO_PI], [64])


@pytest.fixture(scope="session")
def torus2():
    return build_model("torus", 2, [TWO_PI, TWO_PI], [64, 64])


@pytest.fixture(scope="session")
def box2():
    return build_model("box", 2, [4.0, 4.0], [40, 40])


@pytest.fixture(scope="session")
def circle_partition(circle):
    eps = TWO_PI / 8
    return build_partition(circle, ball_cover(circle, eps), eps)


@pytest.fixture(scope="session")
def box_partition(box2):
    eps = 1.0
    return build_partition(box2, ball_cover(box2, eps), eps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
