import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_data():
    """n=30, p=4 centered data with two real signals."""
    from bvsmcmc.linmodel import center_data

    rng = np.random.default_rng(2024)
    X = rng.normal(size=(30, 4))
    y = 0.8 * X[:, 0] - 0.5 * X[:, 2] + rng.normal(size=30)
    return center_data(y, X), y, X
