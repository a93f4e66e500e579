"""Graph and dataset containers plus invariant checking.

Every container is immutable once built: numpy arrays are flagged read-only so
they can be shared freely between worker processes and cached divisions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

EXTRA_NODE_ID = -1  # id of the zero-feature sink added by node-centric graph-task division


class ValidationError(ValueError):
    """Raised when a dataset or graph violates one of its invariants."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Node features plus an edge list over row positions ``0..n-1``.

    ``ids`` are the stable integer identities fed to the hash during division.
    Raw graphs use ``ids == arange(n)``; they only diverge from positions after
    node deletion, so surviving nodes keep their hash buckets.
    """

    features: np.ndarray
    edges: np.ndarray
    directed: bool = False
    ids: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, 0)
        if x.ndim != 2:
            raise ValidationError(f"features must be a 2-d matrix, got shape {x.shape}")
        e = np.asarray(self.edges, dtype=np.int64)
        if e.size == 0:
            e = e.reshape(0, 2)
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValidationError(f"edges must have shape (m, 2), got {e.shape}")
        ids = np.arange(x.shape[0], dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "edges", _frozen(e))
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "directed", bool(self.directed))

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_set(self) -> set[tuple[int, int]]:
        """Edges as id pairs; undirected pairs are ordered (small, large)."""
        out = set()
        for u, v in self.edges.tolist():
            a, b = int(self.ids[u]), int(self.ids[v])
            if not self.directed and a > b:
                a, b = b, a
            out.add((a, b))
        return out

    def position_of(self) -> dict[int, int]:
        return {int(i): p for p, i in enumerate(self.ids.tolist())}

    def digest(self) -> str:
        """Content hash over ids, features, edges and direction."""
        h = hashlib.sha256()
        h.update(b"D" if self.directed else b"U")
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(np.int64(self.feature_dim).tobytes())
        h.update(np.ascontiguousarray(self.ids).tobytes())
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        return h.hexdigest()


def sort_edges(edges, directed: bool = False) -> np.ndarray:
    """Return edges in canonical order; undirected pairs become (min, max)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if not directed and len(e):
        e = np.sort(e, axis=1)
    if len(e):
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
    return e


@dataclass(frozen=True, eq=False)
class NodeTaskDataset:
    graph: Graph
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int
    external_ids: tuple = None
    task: str = field(default="node", init=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))
        for name in ("train_mask", "val_mask", "test_mask"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=bool)))
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def train_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask)

    @property
    def test_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.test_mask)


@dataclass(frozen=True, eq=False)
class GraphTaskDataset:
    graphs: tuple
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int
    external_ids: tuple = None
    task: str = field(default="graph", init=False)

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64).reshape(-1)))
        for name in ("train_idx", "val_idx", "test_idx"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)))
        object.__setattr__(self, "num_classes", int(self.num_classes))

    def __len__(self):
        return len(self.graphs)


Dataset = Union[NodeTaskDataset, GraphTaskDataset]


def graph_violations(g: Graph, where: str = "graph") -> list[str]:
    out = []
    n = g.num_nodes
    if g.ids.shape != (n,):
        out.append(f"{where}: ids length {g.ids.shape[0]} != num_nodes {n}")
    elif len(np.unique(g.ids)) != n:
        out.append(f"{where}: node ids not unique")
    if not np.all(np.isfinite(g.features)):
        out.append(f"{where}: non-finite feature value")
    if g.num_edges == 0:
        return out
    e = g.edges
    bad = (e < 0) | (e >= n)
    if bad.any():
        r = int(np.flatnonzero(bad.any(axis=1))[0])
        out.append(f"{where}: endpoint out of range in edge {tuple(e[r].tolist())} (num_nodes={n})")
        return out
    loops = e[:, 0] == e[:, 1]
    if loops.any() and not g.directed:
        r = int(np.flatnonzero(loops)[0])
        out.append(f"{where}: self-loop {tuple(e[r].tolist())} in undirected graph")
    key = np.sort(e, axis=1) if not g.directed else e
    _, counts = np.unique(key, axis=0, return_counts=True)
    if (counts > 1).any():
        kind = "directed" if g.directed else "undirected"
        out.append(f"{where}: duplicate {kind} edge")
    return out


def validate(obj) -> list[str]:
    """List every invariant violation; an empty list means the object is valid."""
    if isinstance(obj, Graph):
        return graph_violations(obj)
    if isinstance(obj, NodeTaskDataset):
        return _node_dataset_violations(obj)
    if isinstance(obj, GraphTaskDataset):
        return _graph_dataset_violations(obj)
    raise TypeError(f"cannot validate {type(obj).__name__}")


def _node_dataset_violations(ds: NodeTaskDataset) -> list[str]:
    out = graph_violations(ds.graph)
    n = ds.graph.num_nodes
    if ds.num_classes < 1:
        out.append("num_classes must be positive")
    for name in ("labels", "train_mask", "val_mask", "test_mask"):
        if getattr(ds, name).shape != (n,):
            out.append(f"{name} length {getattr(ds, name).shape[0]} != num_nodes {n}")
    if out:
        return out
    if (ds.train_mask & ds.val_mask).any() or (ds.train_mask & ds.test_mask).any() or (ds.val_mask & ds.test_mask).any():
        out.append("masks not disjoint")
    y = ds.labels[ds.train_mask]
    if ((y < 0) | (y >= ds.num_classes)).any():
        out.append("train-masked node with label outside [0, num_classes)")
    labeled = ds.val_mask | ds.test_mask
    y = ds.labels[labeled]
    if ((y < 0) | (y >= ds.num_classes)).any():
        out.append("evaluated node with label outside [0, num_classes)")
    return out


def _graph_dataset_violations(ds: GraphTaskDataset) -> list[str]:
    out = []
    if ds.num_classes < 1:
        out.append("num_classes must be positive")
    if ds.labels.shape != (len(ds.graphs),):
        out.append(f"labels length {ds.labels.shape[0]} != number of graphs {len(ds.graphs)}")
    elif len(ds.labels) and ((ds.labels < 0) | (ds.labels >= ds.num_classes)).any():
        out.append("graph label outside [0, num_classes)")
    dims = {g.feature_dim for g in ds.graphs if g.num_nodes}
    if len(dims) > 1:
        out.append(f"inconsistent feature dimensions {sorted(dims)}")
    for k, g in enumerate(ds.graphs):
        out.extend(graph_violations(g, where=f"graph {k}"))
    splits = [set(ds.train_idx.tolist()), set(ds.val_idx.tolist()), set(ds.test_idx.tolist())]
    for s in splits:
        if any(i < 0 or i >= len(ds.graphs) for i in s):
            out.append("split index out of range")
            break
    if (splits[0] & splits[1]) or (splits[0] & splits[2]) or (splits[1] & splits[2]):
        out.append("split index sets not disjoint")
    return out


def check(obj):
    """Raise :class:`ValidationError` unless ``obj`` is valid; returns ``obj``."""
    v = validate(obj)
    if v:
        raise ValidationError(v)
    return obj
