import numpy as np
import pytest

from vocdev.som import DecaySchedules, SomLayer, train


@pytest.fixture(scope="session")
def small_som():
    """A frozen 200-neuron map trained on Gaussian frames; cheap to build."""
    X = np.random.default_rng(0).normal(size=(600, 20))
    return train(SomLayer(200, 20, DecaySchedules.for_iterations(4000, sigma0=20), seed=0), X, rng_seed=1)


@pytest.fixture(scope="session")
def small_frames():
    return np.random.default_rng(7).normal(size=(30, 20))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
