import numpy as np
import pytest
from hypothesis import given, strategies as st

import pinned12
from certgraph.division import (
    ConfigMismatchError,
    DivisionConfig,
    HashSpec,
    IndexOverflowError,
    assignment_text,
    canonicalize_for_training,
    count_differing_sets,
    divide,
    divide_training_set,
    edge_subgraph_index,
    encode_index,
    node_subgraph_index,
)
from certgraph.graph import EXTRA_NODE_ID, Graph, GraphTaskDataset, NodeTaskDataset
from certgraph.perturbation import GraphEdit, Perturbation, apply

from conftest import GOLDEN, random_graph, random_graph_dataset

DEC4 = HashSpec("decimal_test", 4)
ALGOS = ("md5", "sha1", "sha256", "decimal_test")


def cfg(mode="edge_centric", S=2, task="node", algo="decimal_test", pad=4):
    return DivisionConfig(mode, S, task, HashSpec(algo, pad))


class TestEncoding:
    def test_examples(self):
        assert encode_index(7, 4) == "0007"
        assert encode_index(0, 4) == "0000"
        with pytest.raises(IndexOverflowError):
            encode_index(12345, 4)

    def test_edge_index_examples(self):
        c = cfg()
        assert edge_subgraph_index(1, 2, c) == 1
        assert edge_subgraph_index(2, 1, c) == 1

    def test_node_index_examples(self):
        c = cfg(mode="node_centric", S=3)
        assert node_subgraph_index(5, c) == 3
        assert node_subgraph_index(0, c) == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DivisionConfig(S=0)
        with pytest.raises(ValueError):
            DivisionConfig(mode="diagonal")
        with pytest.raises(ValueError):
            HashSpec("crc32")
        assert DivisionConfig(mode="node").mode == "node_centric"

    def test_divide_rejects_wide_indices(self):
        g = Graph(np.zeros((12, 1)), [(0, 11)])
        with pytest.raises(IndexOverflowError):
            divide(g, cfg(pad=1))


class TestGolden:
    def _expected(self):
        blocks, cur = {}, None
        for line in (GOLDEN / "division.golden").read_text().splitlines():
            if line.startswith("["):
                cur = line
                blocks[cur] = [line]
            else:
                blocks[cur].append(line)
        return {k: "\n".join(v) + "\n" for k, v in blocks.items()}

    def test_every_block_matches(self):
        g = Graph(np.zeros((pinned12.NUM_NODES, 1)), pinned12.EDGES)
        expected = self._expected()
        n = 0
        for mode in pinned12.MODES:
            for algo in pinned12.HASHES:
                for S in pinned12.S_VALUES:
                    c = DivisionConfig(mode, S, "node", HashSpec(algo, pinned12.PAD))
                    text = assignment_text(g, c)
                    assert text == expected[text.splitlines()[0]]
                    n += 1
        assert n == 24

    def test_spot_values(self):
        expected = self._expected()
        spot = expected["[spot md5 S=50 pad=8]"].splitlines()[1]
        c = DivisionConfig("node_centric", 50, "node", HashSpec("md5", 8))
        assert spot == f"node 17 -> {node_subgraph_index(17, c)}"
        edge = [l for l in expected["[edge_centric md5 S=50 pad=8]"].splitlines() if l.startswith("edge 1 2 ")][0]
        assert edge == f"edge 1 2 -> {edge_subgraph_index(1, 2, DivisionConfig('edge_centric', 50))}"


class TestDivideExamples:
    def test_path_edge_centric(self, path3):
        fam = divide(path3, cfg())
        assert fam[1].edge_set() == {(1, 2)}
        assert fam[2].edge_set() == {(0, 1)}
        assert fam[1].num_nodes == fam[2].num_nodes == 3

    def test_path_node_centric(self, path3):
        fam = divide(path3, cfg(mode="node_centric"))
        assert fam[1].directed and fam[2].directed
        # node 0 and 2 hash to 1, node 1 to 2; self-loops follow their node
        assert fam[1].edge_set() == {(0, 1), (2, 1), (0, 0), (2, 2)}
        assert fam[2].edge_set() == {(1, 0), (1, 2), (1, 1)}

    def test_path_edge_centric_graph_task(self, path3):
        fam = divide(path3, cfg(task="graph"))
        assert fam[1].ids.tolist() == [1, 2]
        assert 0 not in fam[1].ids.tolist()
        assert fam[2].ids.tolist() == [0, 1]

    def test_node_centric_graph_task_extra_node(self, path3):
        fam = divide(path3, cfg(mode="node_centric", task="graph"))
        sub = fam[1]
        assert sub.ids.tolist() == [0, 2, EXTRA_NODE_ID]
        k = fam.extra_node_index[0]
        assert np.all(sub.features[k] == 0)
        # no parent edge survives between nodes 0 and 2; both point at the sink
        assert sub.edge_set() == {(0, 0), (2, 2), (0, EXTRA_NODE_ID), (2, EXTRA_NODE_ID)}

    def test_directed_input_rejected(self):
        with pytest.raises(ValueError):
            divide(Graph(np.zeros((2, 1)), [(0, 1)], directed=True), cfg())


graph_seeds = st.integers(0, 2**31 - 1)


@given(seed=graph_seeds, S=st.sampled_from([1, 2, 5, 50]), algo=st.sampled_from(ALGOS))
def test_partition_law(seed, S, algo):
    g = random_graph(np.random.default_rng(seed), n_max=15)
    fam = divide(g, DivisionConfig("edge_centric", S, "node", HashSpec(algo)))
    seen = set()
    for i in range(1, S + 1):
        es = fam[i].edge_set()
        assert not (es & seen)
        seen |= es
    assert seen == g.edge_set()


@given(seed=graph_seeds, S=st.sampled_from([1, 2, 5, 50]), algo=st.sampled_from(ALGOS),
       task=st.sampled_from(["node", "graph"]))
def test_colocation_law(seed, S, algo, task):
    g = random_graph(np.random.default_rng(seed), n_max=15)
    c = DivisionConfig("node_centric", S, task, HashSpec(algo))
    fam = divide(g, c)
    home = {}
    for i in range(1, S + 1):
        for u, v in fam[i].edge_set():
            if v == EXTRA_NODE_ID:
                continue
            assert home.setdefault(u, i) == i
            assert i == node_subgraph_index(u, c)
    # every node's self-loop is routed to its own bucket
    assert set(home) == set(g.ids.tolist())


@given(seed=graph_seeds, S=st.sampled_from([2, 5]))
def test_edge_centric_graph_task_has_no_isolated_nodes(seed, S):
    g = random_graph(np.random.default_rng(seed), n_max=10)
    for sub in divide(g, cfg(S=S, task="graph", algo="md5", pad=8)).subgraphs:
        assert set(np.unique(sub.edges).tolist()) == set(range(sub.num_nodes))


@given(seed=graph_seeds)
def test_divide_is_deterministic(seed):
    g = random_graph(np.random.default_rng(seed))
    c = DivisionConfig("node_centric", 5, "graph")
    a, b = divide(g, c), divide(g, c)
    assert [s.digest() for s in a.subgraphs] == [s.digest() for s in b.subgraphs]


class TestTrainingSets:
    def test_graph_task_cardinality(self):
        g = Graph(np.ones((2, 1)), [(0, 1)])
        ds = GraphTaskDataset([g] * 5, [0, 1, 0, 1, 0], [0, 1, 2], [3], [4], 2)
        sets = divide_training_set(ds, DivisionConfig(S=4, task="graph"))
        assert len(sets) == 4 and all(len(s.graphs) == 3 for s in sets)

    def test_node_task_one_subgraph_each(self, sbm):
        sets = divide_training_set(sbm, DivisionConfig(S=6))
        assert len(sets) == 6 and all(len(s.graphs) == 1 for s in sets)

    def test_stable_keys(self, sbm):
        c = DivisionConfig("node_centric", 6)
        assert divide_training_set(sbm, c).keys() == divide_training_set(sbm, c).keys()

    def test_task_mismatch(self, sbm):
        with pytest.raises(ConfigMismatchError):
            divide_training_set(sbm, DivisionConfig(task="graph"))

    def test_count_identical_is_zero(self, sbm):
        c = DivisionConfig(S=6)
        assert count_differing_sets(divide_training_set(sbm, c), divide_training_set(sbm, c)) == 0

    def test_count_config_mismatch(self, sbm):
        a = divide_training_set(sbm, DivisionConfig(S=6))
        b = divide_training_set(sbm, DivisionConfig(S=5))
        with pytest.raises(ConfigMismatchError):
            count_differing_sets(a, b)

    def test_single_edge_deletion_changes_one_set(self, sbm):
        c = DivisionConfig(S=6)
        e = sorted(sbm.graph.edge_set())[0]
        poisoned = apply(sbm, Perturbation([GraphEdit(edge_deletions=[e])]))
        assert count_differing_sets(divide_training_set(sbm, c), divide_training_set(poisoned, c)) <= 1

    def test_single_edge_deletion_far_from_training_changes_nothing(self):
        # path 0-1-2-3-4-5, only node 0 labelled: edge (4,5) lies outside its two-hop field
        g = Graph(np.eye(6), [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
        ds = NodeTaskDataset(g, [0] * 6, [1, 0, 0, 0, 0, 0], [0] * 6, [0, 0, 0, 0, 0, 1], 2)
        c = DivisionConfig(S=3)
        poisoned = apply(ds, Perturbation([GraphEdit(edge_deletions=[(4, 5)])]))
        assert count_differing_sets(divide_training_set(ds, c), divide_training_set(poisoned, c)) == 0


class TestCanonical:
    def _ds(self, g, train):
        n = g.num_nodes
        return np.zeros(n, dtype=np.int64), np.isin(np.arange(n), train)

    def test_isolated_unlabelled_node_dropped(self):
        g = Graph(np.eye(4), [(0, 1), (1, 2)])
        y, m = self._ds(g, [0])
        c = canonicalize_for_training(g, "node", y, m)
        assert 3 not in c.graph.ids.tolist()

    def test_isolated_train_node_kept(self):
        g = Graph(np.eye(4), [(0, 1), (1, 2)])
        y, m = self._ds(g, [0, 3])
        c = canonicalize_for_training(g, "node", y, m)
        assert 3 in c.graph.ids.tolist()

    def test_adding_isolated_node_keeps_key(self):
        g = Graph(np.eye(3), [(0, 1), (1, 2)])
        h = Graph(np.vstack([np.eye(3), [[5.0, 5.0, 5.0]]]), [(0, 1), (1, 2)])
        y, m = self._ds(g, [0])
        y2, m2 = self._ds(h, [0])
        assert canonicalize_for_training(g, "node", y, m).key() == canonicalize_for_training(h, "node", y2, m2).key()

    def test_graph_task_identity(self, path3):
        c = canonicalize_for_training(path3, "graph")
        assert c.graph.num_nodes == 3 and np.array_equal(c.graph.features, path3.features)

    @given(seed=graph_seeds)
    def test_canonical_stable(self, seed):
        ds = random_graph_dataset(np.random.default_rng(seed))
        c = DivisionConfig("edge_centric", 3, "graph")
        assert divide_training_set(ds, c).keys() == divide_training_set(ds, c).keys()
