import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glmm.graph import Graph

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_weights(rng, n, p=0.6, low=0.1, high=2.0):
    """Symmetric random weight matrix with zero diagonal."""
    mask = np.triu(rng.random((n, n)) < p, k=1)
    W = np.where(mask, rng.uniform(low, high, (n, n)), 0.0)
    return W + W.T


def path_graph(n):
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = 1.0
    return Graph(W)


def bfs_components(W):
    """Reference connected-component count by breadth-first search."""
    n = W.shape[0]
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        queue = [s]
        seen[s] = True
        while queue:
            u = queue.pop(0)
            for v in range(n):
                if W[u, v] > 0 and not seen[v]:
                    seen[v] = True
                    queue.append(v)
    return count


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
