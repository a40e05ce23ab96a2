import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from orsim.domain import Case, Provenance, Quadruplet, Solution, State  # noqa: E402
from orsim.persistence import default_config_path, load_config  # noqa: E402


def q(e, a, v, t):
    return Quadruplet(e, a, float(v), t)


# rows of the worked retrieval example; the figure's "fatique" spelling is read as "fatigue"
TARGET = (q("surgeon", "fatigue", 2.7, 400), q("staphy", "infection", 270, 400))
CASE_1 = Case((q("surgeon", "fatigue", 3.2, 700),), Solution(State.NORMAL, "Normal"), Provenance.AUTO, id=1)
CASE_8 = Case(
    (q("bistoury", "fatigue", 0.9, 1200), q("nurse", "fatigue", 2.1, 1200)),
    Solution(State.NORMAL, "Normal"), Provenance.AUTO, id=8,
)
CASE_35 = Case(
    (q("nurse", "fatigue", 2.5, 300), q("staphy", "infection", 280, 300)),
    Solution(State.ALERT, "Pause Pers."), Provenance.AUTO, id=35,
)


@pytest.fixture
def paper_cases():
    return [CASE_1, CASE_8, CASE_35]


@pytest.fixture(scope="session")
def default_config():
    return load_config(default_config_path())


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line, then fail the test if the criterion is not met."""

    def report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
