"""JSON interchange format for node- and graph-task datasets.

Grammar (one JSON object per file)::

    {
      "format": "certgraph-dataset", "version": 1,
      "task": "node" | "graph",
      "num_classes": C,
      "graphs": [
        {
          "num_nodes": n,
          "feature_dim": d,                        # optional unless n == 0
          "features": [[x00, x01, ...], ...],      # n rows, row-major
          "edges": [[u, v], ...],                  # undirected, no self-loops
          "node_ids": [...],                       # optional external ids
          "hash_ids": [...],                       # optional; only after node deletion
          # node task only (exactly one graph):
          "labels": [...], "train_mask": [0|1, ...], "val_mask": [...], "test_mask": [...]
          # graph task only:
          "label": y
        }, ...
      ],
      "split": {"train": [...], "val": [...], "test": [...]}   # graph task only
    }

When ``node_ids`` is present, edges are written in terms of those ids and the
loader re-indexes nodes densely in row order, keeping the mapping on the dataset
as ``external_ids``. ``dumps`` is canonical (sorted keys, sorted edges,
shortest round-trip float repr), so ``dumps(loads(text)) == text`` for any
canonical file.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from certgraph.graph import (
    Dataset,
    Graph,
    GraphTaskDataset,
    NodeTaskDataset,
    ValidationError,
    sort_edges,
    validate,
)

FORMAT_NAME = "certgraph-dataset"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """The file is not well-formed interchange JSON."""


def _field(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise DatasetFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _int(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise DatasetFormatError(f"{where}: expected integer, got {value!r}")
    return value


def _int_list(value, where):
    if not isinstance(value, list):
        raise DatasetFormatError(f"{where}: expected list")
    return [_int(v, f"{where}[{k}]") for k, v in enumerate(value)]


def _parse_graph(obj, where):
    n = _int(_field(obj, "num_nodes", where), f"{where}.num_nodes")
    if n < 0:
        raise DatasetFormatError(f"{where}.num_nodes: must be non-negative")
    rows = _field(obj, "features", where)
    if not isinstance(rows, list) or len(rows) != n:
        raise DatasetFormatError(f"{where}.features: expected {n} rows")
    width = None
    for k, row in enumerate(rows):
        if not isinstance(row, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            raise DatasetFormatError(f"{where}.features[{k}]: expected a list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DatasetFormatError(f"{where}.features[{k}]: row length {len(row)} != {width}")
    dim = obj.get("feature_dim", width or 0)
    x = np.asarray(rows, dtype=np.float64).reshape(n, dim)

    raw_ids = obj.get("node_ids")
    lookup = None
    if raw_ids is not None:
        raw_ids = _int_list(raw_ids, f"{where}.node_ids")
        if len(raw_ids) != n:
            raise DatasetFormatError(f"{where}.node_ids: expected {n} ids")
        if len(set(raw_ids)) != n:
            raise ValidationError(f"{where}: duplicate node id")
        lookup = {ext: k for k, ext in enumerate(raw_ids)}

    edges = []
    raw_edges = _field(obj, "edges", where)
    if not isinstance(raw_edges, list):
        raise DatasetFormatError(f"{where}.edges: expected list of pairs")
    for k, pair in enumerate(raw_edges):
        if not isinstance(pair, list) or len(pair) != 2:
            raise DatasetFormatError(f"{where}.edges[{k}]: expected [u, v]")
        u, v = (_int(t, f"{where}.edges[{k}]") for t in pair)
        if lookup is not None:
            if u not in lookup or v not in lookup:
                raise ValidationError(f"{where}: endpoint out of range in edge ({u}, {v})")
            u, v = lookup[u], lookup[v]
        edges.append((u, v))
    hash_ids = obj.get("hash_ids")
    if hash_ids is not None:
        hash_ids = _int_list(hash_ids, f"{where}.hash_ids")
        if len(hash_ids) != n:
            raise DatasetFormatError(f"{where}.hash_ids: expected {n} ids")
    g = Graph(x, sort_edges(edges), ids=hash_ids)
    return g, (np.asarray(raw_ids, dtype=np.int64) if raw_ids is not None else None)


def loads(text: str, task: str | None = None) -> Dataset:
    """Parse and validate a dataset document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DatasetFormatError("top level: expected an object")
    if doc.get("format", FORMAT_NAME) != FORMAT_NAME:
        raise DatasetFormatError(f"format: unknown format {doc.get('format')!r}")
    file_task = _field(doc, "task", "top level")
    if file_task not in ("node", "graph"):
        raise DatasetFormatError(f"task: expected 'node' or 'graph', got {file_task!r}")
    if task is not None and task != file_task:
        raise DatasetFormatError(f"task: file holds a {file_task} dataset, {task} requested")
    c = _int(_field(doc, "num_classes", "top level"), "num_classes")
    entries = _field(doc, "graphs", "top level")
    if not isinstance(entries, list):
        raise DatasetFormatError("graphs: expected list")

    if file_task == "node":
        if len(entries) != 1:
            raise DatasetFormatError(f"graphs: node task needs exactly one graph, got {len(entries)}")
        g, ext = _parse_graph(entries[0], "graphs[0]")
        e = entries[0]
        fields = {}
        for name in ("labels", "train_mask", "val_mask", "test_mask"):
            fields[name] = _int_list(_field(e, name, "graphs[0]"), f"graphs[0].{name}")
            if len(fields[name]) != g.num_nodes:
                raise DatasetFormatError(f"graphs[0].{name}: expected {g.num_nodes} entries")
        ds = NodeTaskDataset(
            g,
            fields["labels"],
            fields["train_mask"],
            fields["val_mask"],
            fields["test_mask"],
            c,
            external_ids=(ext,) if ext is not None else None,
        )
    else:
        graphs, labels, exts = [], [], []
        for k, e in enumerate(entries):
            g, ext = _parse_graph(e, f"graphs[{k}]")
            graphs.append(g)
            exts.append(ext)
            labels.append(_int(_field(e, "label", f"graphs[{k}]"), f"graphs[{k}].label"))
        split = doc.get("split", {})
        ds = GraphTaskDataset(
            graphs,
            labels,
            _int_list(split.get("train", []), "split.train"),
            _int_list(split.get("val", []), "split.val"),
            _int_list(split.get("test", []), "split.test"),
            c,
            external_ids=tuple(exts) if any(x is not None for x in exts) else None,
        )
    violations = validate(ds)
    if violations:
        raise ValidationError(violations)
    return ds


def load_dataset(path, task: str | None = None) -> Dataset:
    return loads(Path(path).read_text(), task=task)


def _graph_doc(g: Graph, ext) -> dict:
    edges = sort_edges(g.edges, directed=g.directed)
    doc = {
        "num_nodes": g.num_nodes,
        "feature_dim": g.feature_dim,
        "features": g.features.tolist(),
    }
    if not np.array_equal(g.ids, np.arange(g.num_nodes)):
        doc["hash_ids"] = g.ids.tolist()
    if ext is not None:
        doc["node_ids"] = [int(t) for t in ext]
        doc["edges"] = [[int(ext[u]), int(ext[v])] for u, v in edges.tolist()]
    else:
        doc["edges"] = edges.tolist()
    return doc


def dumps(ds: Dataset) -> str:
    """Canonical serialization; deterministic byte-for-byte."""
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "task": ds.task, "num_classes": ds.num_classes}
    if isinstance(ds, NodeTaskDataset):
        ext = ds.external_ids[0] if ds.external_ids else None
        g = _graph_doc(ds.graph, ext)
        g["labels"] = ds.labels.tolist()
        for name in ("train_mask", "val_mask", "test_mask"):
            g[name] = getattr(ds, name).astype(int).tolist()
        doc["graphs"] = [g]
    else:
        exts = ds.external_ids or (None,) * len(ds.graphs)
        graphs = []
        for g, y, ext in zip(ds.graphs, ds.labels.tolist(), exts):
            d = _graph_doc(g, ext)
            d["label"] = y
            graphs.append(d)
        doc["graphs"] = graphs
        doc["split"] = {
            "train": ds.train_idx.tolist(),
            "val": ds.val_idx.tolist(),
            "test": ds.test_idx.tolist(),
        }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dumps(ds))
