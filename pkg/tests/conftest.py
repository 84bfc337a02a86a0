import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from flowtop.manifolds import Euclidean, FlatTorus, Hyperbolic2, Sphere  # noqa: E402


def all_manifolds():
    return [
        Euclidean(3),
        Sphere(2, radius=1.0),
        Sphere(2, radius=2.5),
        FlatTorus.unit(2),
        FlatTorus([[1.0, 0.0], [0.3, 0.8]]),
        Hyperbolic2(),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
