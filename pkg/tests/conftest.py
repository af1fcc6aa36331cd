import numpy as np
import pytest

from cmcfoliate.hemisphere import build_basis
from cmcfoliate.solver import SolverContext


@pytest.fixture(scope="session")
def basis2():
    return build_basis(2, L_max=6, quadrature_order=16)[0]


@pytest.fixture(scope="session")
def ctx2():
    return SolverContext(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
