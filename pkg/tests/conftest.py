import numpy as np
import pytest
from hypothesis import settings

from constrained_symplectic.models import pendulum, spherical_pendulum

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pend():
    """Unit pendulum with M = I, g = 9.81."""
    return pendulum()


@pytest.fixture
def sph():
    return spherical_pendulum()


def random_pendulum_state(rng, md, pmax=2.0):
    z = np.array([rng.uniform(-np.pi + 0.2, np.pi - 0.2), rng.uniform(-pmax, pmax)])
    return md.charted.chart(z)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
