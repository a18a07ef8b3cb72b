import numpy as np
import pytest

from lipnnm.densela import generalized_modes
from lipnnm.model import NonlinearLaw, broken_supports_model, chain_model
from lipnnm.periodic import with_slopes
from lipnnm.shooting import build_modal_ode, law_ode

CHAIN3_MASSES = (1.0, 1.3, 0.7)


def make_chain3(epsilon=0.0):
    return chain_model(3, "fixed_left", masses=CHAIN3_MASSES, E=1.0, Eprime=[1.0, 0.0, 1.0],
                       epsilon=epsilon)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def chain3():
    return make_chain3()


@pytest.fixture(scope="session")
def chain3_modal(chain3):
    return generalized_modes(chain3.stiffness, chain3.masses)


@pytest.fixture(scope="session")
def chain3_ode(chain3, chain3_modal):
    # slope 1/2 is degenerate for gap-free springs; the solver would switch to 1/4 anyway
    return with_slopes(build_modal_ode(chain3, chain3_modal), 0.25)


@pytest.fixture(scope="session")
def unilateral_ode():
    return law_ode(NonlinearLaw.unilateral())


@pytest.fixture(scope="session")
def broken5():
    return broken_supports_model(5, epsilon=0.1)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
