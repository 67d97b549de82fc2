import numpy as np
import pytest

from grapl.graph import WeightedGraph


def random_graph(n: int, p: float, rng: np.random.Generator, weighted: bool = False) -> WeightedGraph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return WeightedGraph.from_arrays(n, iu[keep], ju[keep], w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One summary line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
