import numpy as np
import pytest

from dagdqn.dag import from_edges


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path3():
    return from_edges(1, [0, 0, 0], [(1, 2), (2, 3)])


@pytest.fixture
def fig1_before():
    # three nodes of types 1, 2, 1 (0-based 0, 1, 0) with edges 1->2, 2->3
    return from_edges(3, [0, 1, 0], [(1, 2), (2, 3)])


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
