import numpy as np
import pytest

from mdarecon.pcm import SparsePCM, generate_raptor_family

TOY_ROWS = [[0, 1], [2, 3], [4, 5]]

TOY_ALIST = """6 3
1 2
1 1 1 1 1 1
2 2 2
1
1
2
2
3
3
1 2
3 4
5 6
"""


@pytest.fixture
def toy_pcm():
    return SparsePCM.from_rows(TOY_ROWS, 6, base_n=6, base_m=3)


@pytest.fixture(scope="session")
def small_raptor():
    return generate_raptor_family(11, 60, 40, 20, 2)


@pytest.fixture(scope="session")
def mid_raptor():
    return generate_raptor_family(5, 1000, 750, 250, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for num in sorted(LINES):
            terminalreporter.write_line(LINES[num])
