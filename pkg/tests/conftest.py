import numpy as np
import pytest

from losstomo.simulate import ProbeTrace
from losstomo.stats import Indicators, NodeStats, co_observations, masks_of_order
from losstomo.tree import star_tree

ACCEPTANCE_LINES = []


def indicator_stats(columns, max_order=None, node=1):
    """NodeStats from hand-written descendant indicator columns."""
    values = np.array(columns, dtype=np.uint8).T
    children = tuple(range(2, 2 + values.shape[1]))
    return co_observations(Indicators(node, children, values), max_order)


def count_stats(d, n, counts, n_k1=None, node=1):
    """NodeStats from a ``{mask: count}`` table, filling every order present."""
    max_order = max(m.bit_count() for m in counts)
    for i in range(1, max_order + 1):
        for m in masks_of_order(d, i):
            if m not in counts:
                raise ValueError(f"missing count for mask {m}")
    return NodeStats(node, tuple(range(2, 2 + d)), n, dict(counts), dict.fromkeys(counts, n),
                     max_order, n_k1 if n_k1 is not None else 0)


def trace_from_rows(rows, receivers):
    return ProbeTrace(np.array(rows, dtype=np.uint8), tuple(receivers))


@pytest.fixture
def table1_tree():
    return star_tree([0.99] * 8, 0.99)


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append(f"{status}  {name}  ({report.duration:.1f} s)")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
