import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from preflabel.graphs import generate_random_graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_graphs():
    gen = np.random.default_rng(7)
    return [generate_random_graph(int(gen.integers(4, 9)), 0.4, gen) for _ in range(20)]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
