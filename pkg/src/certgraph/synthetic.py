"""Seeded synthetic datasets standing in for citation graphs and molecules.

Both generators are pure functions of ``(kind, params, seed)``: they draw from a
single ``numpy.random.Generator`` (PCG64), which is platform independent.
"""

from __future__ import annotations

import numpy as np

from certgraph.graph import Graph, GraphTaskDataset, NodeTaskDataset, check, sort_edges

SBM_DEFAULTS = dict(
    block_sizes=(30, 30),
    p_in=0.3,
    p_out=0.02,
    feature_dim=8,
    feature_signal=1.5,
    feature_noise=1.0,
    train_frac=0.3,
    val_frac=0.1,
    test_frac=0.6,
)

MOTIF_DEFAULTS = dict(
    num_graphs=40,
    num_classes=2,
    min_nodes=10,
    max_nodes=20,
    p_edge=0.15,
    feature_dim=4,
    motif_type_prob=0.8,
    train_frac=0.5,
    val_frac=0.2,
    test_frac=0.3,
)


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def _check_fracs(params):
    for k in ("train_frac", "val_frac", "test_frac"):
        _check_prob(k, params[k])
    if params["train_frac"] + params["val_frac"] + params["test_frac"] > 1.0 + 1e-12:
        raise ValueError("split fractions sum above 1")


def _split(rng, idx, params):
    idx = np.array(idx, dtype=np.int64)
    rng.shuffle(idx)
    n = len(idx)
    a = int(round(params["train_frac"] * n))
    b = a + int(round(params["val_frac"] * n))
    c = min(n, b + int(round(params["test_frac"] * n)))
    return np.sort(idx[:a]), np.sort(idx[a:b]), np.sort(idx[b:c])


def sbm_node(seed: int = 0, **params) -> NodeTaskDataset:
    """Two-or-more block stochastic block model; the block is the node label.

    Features are ``signal * onehot(label) + noise``, so both structure and
    features carry the label. Train/val/test masks are stratified per block.
    """
    p = {**SBM_DEFAULTS, **params}
    unknown = set(params) - set(SBM_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown sbm_node parameters: {sorted(unknown)}")
    sizes = [int(s) for s in p["block_sizes"]]
    if not sizes or any(s < 0 for s in sizes):
        raise ValueError("block_sizes must be non-negative and non-empty")
    _check_prob("p_in", p["p_in"])
    _check_prob("p_out", p["p_out"])
    _check_fracs(p)
    if p["feature_dim"] < 1:
        raise ValueError("feature_dim must be positive")

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p["p_in"], p["p_out"])
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    d = int(p["feature_dim"])
    means = np.zeros((len(sizes), d))
    means[np.arange(len(sizes)), np.arange(len(sizes)) % d] = p["feature_signal"]
    x = means[labels] + p["feature_noise"] * rng.standard_normal((n, d))

    train = np.zeros(n, bool)
    val = np.zeros(n, bool)
    test = np.zeros(n, bool)
    for c in range(len(sizes)):
        a, b, t = _split(rng, np.flatnonzero(labels == c), p)
        train[a] = True
        val[b] = True
        test[t] = True
    ds = NodeTaskDataset(Graph(x, sort_edges(edges)), labels, train, val, test, max(len(sizes), 1))
    return check(ds)


def _motif(c: int):
    """Edges of the class-``c`` motif on local indices 0..k-1."""
    if c == 0:  # 6-cycle
        return 6, [(i, (i + 1) % 6) for i in range(6)]
    if c == 1:  # house: square plus roof
        return 5, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]
    k = 3 + c  # star with c+2 leaves
    return k, [(0, i) for i in range(1, k)]


def motif_graph(seed: int = 0, **params) -> GraphTaskDataset:
    """Random graphs each carrying one class-specific motif.

    Node features are one-hot "types": motif nodes mostly get type ``1 + c``
    for class ``c``, background nodes type 0, so the label is visible both
    structurally and in the feature mix.
    """
    p = {**MOTIF_DEFAULTS, **params}
    unknown = set(params) - set(MOTIF_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown motif_graph parameters: {sorted(unknown)}")
    _check_prob("p_edge", p["p_edge"])
    _check_prob("motif_type_prob", p["motif_type_prob"])
    _check_fracs(p)
    num_graphs, C, d = int(p["num_graphs"]), int(p["num_classes"]), int(p["feature_dim"])
    if num_graphs < 0 or C < 1 or d < C + 1 or p["min_nodes"] < 1 or p["max_nodes"] < p["min_nodes"]:
        raise ValueError("invalid motif_graph sizes (need num_graphs >= 0, classes >= 1, feature_dim > classes)")

    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    for _ in range(num_graphs):
        c = int(rng.integers(C))
        base = int(rng.integers(p["min_nodes"], p["max_nodes"] + 1))
        k, motif = _motif(c)
        n = base + k
        iu, ju = np.triu_indices(base, k=1)
        keep = rng.random(len(iu)) < p["p_edge"]
        edges = [(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])]
        edges += [(base + a, base + b) for a, b in motif]
        # one bridge so the motif is attached to the background
        edges.append((int(rng.integers(base)), base))
        types = np.zeros(n, dtype=np.int64)
        motif_typed = rng.random(k) < p["motif_type_prob"]
        types[base:][motif_typed] = 1 + c
        x = np.zeros((n, d))
        x[np.arange(n), types] = 1.0
        graphs.append(Graph(x, sort_edges(edges)))
        labels.append(c)
    train, val, test = _split(rng, np.arange(num_graphs), p)
    return check(GraphTaskDataset(graphs, np.asarray(labels, dtype=np.int64), train, val, test, C))


def generate_synthetic(kind: str, params: dict | None = None, seed: int = 0):
    params = dict(params or {})
    if kind == "sbm_node":
        return sbm_node(seed, **params)
    if kind == "motif_graph":
        return motif_graph(seed, **params)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def pinned_sbm() -> NodeTaskDataset:
    """The fixed 60-node, 2-block node-task dataset used by the acceptance suite."""
    return sbm_node(seed=7)


def pinned_motif() -> GraphTaskDataset:
    """The fixed 40-graph motif dataset used by the acceptance suite."""
    return motif_graph(seed=7)
