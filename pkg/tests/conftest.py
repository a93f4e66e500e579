import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from certgraph.graph import Graph, GraphTaskDataset, NodeTaskDataset
from certgraph.synthetic import pinned_motif, pinned_sbm

GOLDEN = Path(__file__).parent / "golden"
sys.path.insert(0, str(GOLDEN))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_graph(rng, n_max=12, p=0.3, d=3, n_min=0):
    n = int(rng.integers(n_min, n_max + 1))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return Graph(rng.standard_normal((n, d)), np.array(pairs, dtype=np.int64).reshape(-1, 2))


def random_node_dataset(rng, n_max=12, p=0.3, d=3, C=2, train_p=0.3):
    g = random_graph(rng, n_max=n_max, p=p, d=d, n_min=3)
    n = g.num_nodes
    r = rng.random(n)
    train = r < train_p
    test = r > 1 - train_p
    if not train.any():
        train[0] = True
        test[0] = False
    return NodeTaskDataset(g, rng.integers(0, C, n), train, np.zeros(n, bool), test, C)


def random_graph_dataset(rng, k_max=5, n_max=8, p=0.35, d=3, C=2):
    k = int(rng.integers(2, k_max + 1))
    graphs = [random_graph(rng, n_max=n_max, p=p, d=d, n_min=2) for _ in range(k)]
    idx = np.arange(k)
    n_train = max(1, k // 2)
    return GraphTaskDataset(graphs, rng.integers(0, C, k), idx[:n_train], [], idx[n_train:], C)


@pytest.fixture(scope="session")
def sbm():
    return pinned_sbm()


@pytest.fixture(scope="session")
def motif():
    return pinned_motif()


@pytest.fixture
def path3():
    return Graph(np.eye(3), [(0, 1), (1, 2)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
