import numpy as np
import pytest

from driftlab import diskmesh


@pytest.fixture(scope="session")
def meshes():
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = diskmesh.build_disk_mesh(level)
        return cache[level]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
