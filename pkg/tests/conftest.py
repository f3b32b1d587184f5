import numpy as np
import pytest

from goalsplit.config import preset
from goalsplit.model import evaluate_qoi
from goalsplit.reference import reference_solve

# pass/fail lines of the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def experiments():
    return {name: (preset(name).problem(), preset(name).qoi_functional()) for name in ("exp1", "exp2", "exp3")}


@pytest.fixture(scope="session")
def references(experiments):
    out = {}
    for name, (problem, qoi) in experiments.items():
        ref = reference_solve(problem, qoi)
        out[name] = (ref, evaluate_qoi(qoi, ref))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
