"""Deterministic hash-based division of graphs into S subgraphs.

Edge-centric division hashes every undirected edge (smaller endpoint first) and
so partitions the edge set. Node-centric division hashes every node and sends
all of its outgoing directed edges, including its own self-loop, to that one
bucket. Buckets are 1-based: ``index = h(str) mod S + 1``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from certgraph.graph import (
    EXTRA_NODE_ID,
    Graph,
    GraphTaskDataset,
    NodeTaskDataset,
    sort_edges,
)

HASH_ALGORITHMS = ("md5", "sha1", "sha256", "decimal_test")
MODES = ("edge_centric", "node_centric")
TASKS = ("node", "graph")
_MODE_ALIASES = {"edge": "edge_centric", "node": "node_centric"}

# message-passing depth of the sub-classifier; bounds what training can see
RECEPTIVE_DEPTH = 2


class IndexOverflowError(ValueError):
    """A node index needs more decimal digits than the configured pad width."""


class ConfigMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HashSpec:
    algorithm: str = "md5"
    pad_width: int = 8

    def __post_init__(self):
        algo = self.algorithm.replace("-", "_")
        if algo not in HASH_ALGORITHMS:
            raise ValueError(f"unknown hash algorithm {self.algorithm!r}; expected one of {HASH_ALGORITHMS}")
        object.__setattr__(self, "algorithm", algo)
        if int(self.pad_width) < 1:
            raise ValueError("pad_width must be positive")

    def to_int(self, text: str) -> int:
        """Hash ``text`` to a non-negative integer (digest read big-endian)."""
        if self.algorithm == "decimal_test":
            return int(text, 10)
        digest = hashlib.new(self.algorithm, text.encode("ascii")).digest()
        return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class DivisionConfig:
    mode: str = "edge_centric"
    S: int = 50
    task: str = "node"
    hash: HashSpec = field(default_factory=HashSpec)

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise ValueError(f"unknown division mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if isinstance(self.S, bool) or int(self.S) != self.S or self.S < 1:
            raise ValueError(f"S must be a positive integer, got {self.S!r}")
        object.__setattr__(self, "S", int(self.S))

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "S": self.S,
            "task": self.task,
            "hash": self.hash.algorithm,
            "pad_width": self.hash.pad_width,
        }


def encode_index(u: int, pad_width: int) -> str:
    """Zero-padded decimal string of a node index, e.g. ``(7, 4) -> "0007"``."""
    u = int(u)
    if u < 0:
        raise IndexOverflowError(f"node index {u} is negative")
    s = str(u)
    if len(s) > pad_width:
        raise IndexOverflowError(f"node index {u} needs {len(s)} digits but pad_width is {pad_width}")
    return s.zfill(pad_width)


def edge_subgraph_index(u: int, v: int, config: DivisionConfig) -> int:
    if u > v:
        u, v = v, u
    w = config.hash.pad_width
    return config.hash.to_int(encode_index(u, w) + encode_index(v, w)) % config.S + 1


def node_subgraph_index(u: int, config: DivisionConfig) -> int:
    return config.hash.to_int(encode_index(u, config.hash.pad_width)) % config.S + 1


@dataclass(frozen=True, eq=False)
class SubgraphFamily:
    parent: Graph
    config: DivisionConfig
    subgraphs: tuple
    # position of the zero-feature sink in each subgraph (node-centric graph task only)
    extra_node_index: tuple = None

    def __getitem__(self, i: int) -> Graph:
        """1-based access, matching bucket numbering."""
        return self.subgraphs[i - 1]

    def __len__(self):
        return len(self.subgraphs)


def _node_buckets(g: Graph, config: DivisionConfig) -> np.ndarray:
    return np.fromiter((node_subgraph_index(u, config) for u in g.ids.tolist()), dtype=np.int64, count=g.num_nodes)


def _edge_buckets(g: Graph, config: DivisionConfig) -> np.ndarray:
    ids = g.ids
    return np.fromiter(
        (edge_subgraph_index(int(ids[u]), int(ids[v]), config) for u, v in g.edges.tolist()),
        dtype=np.int64,
        count=g.num_edges,
    )


def _induced(g: Graph, nodes: np.ndarray, edges: np.ndarray, directed: bool) -> Graph:
    """Subgraph on sorted positions ``nodes`` with ``edges`` given in parent positions."""
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = remap[edges] if len(edges) else edges.reshape(0, 2)
    return Graph(g.features[nodes], sort_edges(e, directed=directed), directed=directed, ids=g.ids[nodes])


def divide(graph: Graph, config: DivisionConfig) -> SubgraphFamily:
    """Split one undirected graph into ``config.S`` subgraphs."""
    if graph.directed:
        raise ValueError("divide expects an undirected input graph")
    if graph.num_nodes:
        top = int(graph.ids.max())
        if len(str(top)) > config.hash.pad_width:
            raise IndexOverflowError(f"node index {top} needs more than pad_width={config.hash.pad_width} digits")
    S = config.S
    n = graph.num_nodes
    all_nodes = np.arange(n)
    subs = []
    extra = None

    if config.mode == "edge_centric":
        buckets = _edge_buckets(graph, config)
        for i in range(1, S + 1):
            e = graph.edges[buckets == i]
            if config.task == "node":
                subs.append(Graph(graph.features, e, directed=False, ids=graph.ids))
            else:
                nodes = np.unique(e) if len(e) else np.zeros(0, dtype=np.int64)
                subs.append(_induced(graph, nodes, e, directed=False))
    else:
        nb = _node_buckets(graph, config)
        e = graph.edges
        # every undirected edge becomes u->v and v->u; each follows its source's bucket
        arcs = np.concatenate([e, e[:, ::-1], np.stack([all_nodes, all_nodes], axis=1)]) if n else e
        arc_bucket = nb[arcs[:, 0]] if len(arcs) else np.zeros(0, dtype=np.int64)
        if config.task == "node":
            for i in range(1, S + 1):
                a = arcs[arc_bucket == i]
                subs.append(Graph(graph.features, sort_edges(a, directed=True), directed=True, ids=graph.ids))
        else:
            extra = []
            d = graph.feature_dim
            for i in range(1, S + 1):
                nodes = np.flatnonzero(nb == i)
                a = arcs[(arc_bucket == i) & (nb[arcs[:, 1]] == i)] if len(arcs) else arcs
                k = len(nodes)
                remap = np.full(n, -1, dtype=np.int64)
                remap[nodes] = np.arange(k)
                local = remap[a] if len(a) else a.reshape(0, 2)
                sink = np.stack([np.arange(k), np.full(k, k)], axis=1)
                x = np.vstack([graph.features[nodes], np.zeros((1, d))])
                ids = np.append(graph.ids[nodes], EXTRA_NODE_ID)
                subs.append(Graph(x, sort_edges(np.concatenate([local, sink]), directed=True), directed=True, ids=ids))
                extra.append(k)
            extra = tuple(extra)
    return SubgraphFamily(graph, config, tuple(subs), extra)


# ---------------------------------------------------------------------------
# training sets and their canonical forms


def message_edges(g: Graph) -> np.ndarray:
    """Directed (src, dst) pairs the sub-classifier aggregates over, sorted by (dst, src).

    Undirected graphs get both arc directions plus an implicit self-loop per
    node; directed graphs are taken as they are.
    """
    n = g.num_nodes
    if g.directed:
        arcs = g.edges
    else:
        loops = np.stack([np.arange(n), np.arange(n)], axis=1)
        arcs = np.concatenate([g.edges, g.edges[:, ::-1], loops]) if n else g.edges
    arcs = np.asarray(arcs, dtype=np.int64).reshape(-1, 2)
    if len(arcs):
        arcs = arcs[np.lexsort((arcs[:, 0], arcs[:, 1]))]
    return arcs


@dataclass(frozen=True, eq=False)
class CanonicalGraph:
    """A directed graph with explicit message edges plus per-node training labels.

    ``targets[k]`` is the class of node ``k`` when it contributes to the loss
    and -1 otherwise (graph task: all -1; the graph label lives on the set).
    """

    graph: Graph
    targets: np.ndarray

    def key(self) -> str:
        h = hashlib.sha256(self.graph.digest().encode())
        h.update(np.ascontiguousarray(self.targets, dtype=np.int64).tobytes())
        return h.hexdigest()


def canonicalize_for_training(subgraph: Graph, task: str, labels=None, train_mask=None,
                              depth: int = RECEPTIVE_DEPTH) -> CanonicalGraph:
    """Reduce a subgraph to exactly what training on it can observe.

    Graph task: every present node feeds the readout, so the form is the
    subgraph itself (message edges made explicit). Node task: keep only the
    ``depth``-hop in-neighbourhood of the labelled training nodes, drop every
    other node and edge, and zero the features of kept nodes whose features are
    never read. Isolated unlabeled nodes and, in directed subgraphs, unlabeled
    nodes without outgoing edges therefore vanish.
    """
    arcs = message_edges(subgraph)
    n = subgraph.num_nodes
    if task == "graph":
        g = Graph(subgraph.features, arcs, directed=True, ids=subgraph.ids)
        return CanonicalGraph(g, np.full(n, -1, dtype=np.int64))
    if task != "node":
        raise ValueError(f"unknown task {task!r}")
    train = np.asarray(train_mask, dtype=bool)
    src, dst = arcs[:, 0], arcs[:, 1]
    needed = np.zeros(n, dtype=bool)
    frontier = train.copy()
    for _ in range(depth):
        needed |= frontier
        nxt = np.zeros(n, dtype=bool)
        nxt[src[frontier[dst]]] = True
        frontier = nxt
    read = frontier
    keep_arc = needed[dst]
    kept = train.copy()
    kept[src[keep_arc]] = True
    kept[dst[keep_arc]] = True
    nodes = np.flatnonzero(kept)
    remap = np.full(n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    a = remap[arcs[keep_arc]]
    x = np.where(read[nodes, None], subgraph.features[nodes], 0.0)
    y = np.where(train[nodes], np.asarray(labels, dtype=np.int64)[nodes], -1)
    g = Graph(x, a.reshape(-1, 2), directed=True, ids=subgraph.ids[nodes])
    return CanonicalGraph(g, y)


@dataclass(frozen=True, eq=False)
class SubgraphSet:
    """Training data of one sub-classifier: the ``index``-th subgraph of every training graph.

    Node task: one graph, ``labels`` per node and a ``train_mask``. Graph task:
    one subgraph per training graph and ``labels`` per graph.
    """

    index: int
    task: str
    graphs: tuple
    labels: np.ndarray
    train_mask: np.ndarray = None

    def canonical(self) -> tuple:
        if self.task == "node":
            return tuple(canonicalize_for_training(g, "node", self.labels, self.train_mask) for g in self.graphs)
        return tuple(canonicalize_for_training(g, "graph") for g in self.graphs)

    def key(self) -> str:
        h = hashlib.sha256(self.task.encode())
        for c in self.canonical():
            h.update(c.key().encode())
        if self.task == "graph":
            h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class TrainingSets:
    config: DivisionConfig
    sets: tuple

    def __getitem__(self, k):
        return self.sets[k]

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def keys(self) -> list[str]:
        return [s.key() for s in self.sets]


def divide_training_set(dataset, config: DivisionConfig, divide_fn=None) -> TrainingSets:
    """Build the S per-index training sets for a dataset (stable dataset order)."""
    divide_fn = divide_fn or divide
    if dataset.task != config.task:
        raise ConfigMismatchError(f"dataset task {dataset.task!r} but division configured for {config.task!r}")
    if isinstance(dataset, NodeTaskDataset):
        fam = divide_fn(dataset.graph, config)
        sets = tuple(
            SubgraphSet(i, "node", (fam[i],), dataset.labels, dataset.train_mask) for i in range(1, config.S + 1)
        )
    else:
        assert isinstance(dataset, GraphTaskDataset)
        fams = [divide_fn(dataset.graphs[k], config) for k in dataset.train_idx.tolist()]
        labels = dataset.labels[dataset.train_idx]
        sets = tuple(
            SubgraphSet(i, "graph", tuple(f[i] for f in fams), labels) for i in range(1, config.S + 1)
        )
    return TrainingSets(config, sets)


def count_differing_sets(a: TrainingSets, b: TrainingSets) -> int:
    """Number of bucket indices whose canonical training sets differ."""
    if a.config != b.config or len(a) != len(b):
        raise ConfigMismatchError("training sets were divided under different configurations")
    return sum(x != y for x, y in zip(a.keys(), b.keys()))


def assignment_text(graph: Graph, config: DivisionConfig) -> str:
    """Bucket of every edge (edge-centric) or node (node-centric), one per line.

    Header ``[mode hash S=.. pad=..]`` then ``edge u v -> i`` or ``node u -> i``
    in hash-id terms, edges with the smaller id first, sorted.
    """
    h = config.hash
    lines = [f"[{config.mode} {h.algorithm} S={config.S} pad={h.pad_width}]"]
    if config.mode == "edge_centric":
        pairs = sorted((min(a, b), max(a, b)) for a, b in graph.ids[graph.edges].tolist()) if graph.num_edges else []
        lines += [f"edge {u} {v} -> {edge_subgraph_index(u, v, config)}" for u, v in pairs]
    else:
        lines += [f"node {u} -> {node_subgraph_index(u, config)}" for u in sorted(graph.ids.tolist())]
    return "\n".join(lines) + "\n"
