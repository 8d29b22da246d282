import numpy as np
import pytest

from dwnhar.synthetic import make_har_like


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def tiny_har():
    """Small synthetic HAR-shaped splits (9 channels, 32 steps)."""
    train = make_har_like(240, seed=1, timesteps=32, subjects=range(1, 20))
    test = make_har_like(120, seed=2, timesteps=32, subjects=range(20, 31), split="test")
    return train, test


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
