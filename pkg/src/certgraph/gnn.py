"""Two-layer mean-aggregation graph convolution, written out by hand.

Every reduction runs in a fixed index-ascending order (explicit loops over the
reduced axis, ``np.add.at`` over sorted arcs) instead of BLAS, so a node's
output depends only on the values feeding it and training is bit-reproducible.
Nothing couples nodes except edges: no batch statistics, no global norms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from certgraph.division import CanonicalGraph, SubgraphSet, message_edges
from certgraph.graph import Graph

CHECKPOINT_MAGIC = "certgraph-params"
CHECKPOINT_VERSION = 1
_NAMES = ("W0", "W1", "W_out", "b_out")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModelParams:
    W0: np.ndarray  # (d, h)
    W1: np.ndarray  # (h, h)
    W_out: np.ndarray  # (h, C)
    b_out: np.ndarray  # (C,)

    def __post_init__(self):
        d, h = self.W0.shape
        if self.W1.shape != (h, h) or self.W_out.shape[0] != h or self.b_out.shape != (self.W_out.shape[1],):
            raise ValueError("inconsistent parameter shapes")
        for name in _NAMES:
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite entry in {name}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W0.shape[0], self.W0.shape[1], self.W_out.shape[1]

    def arrays(self) -> tuple:
        return tuple(getattr(self, k) for k in _NAMES)

    def identical(self, other: "ModelParams") -> bool:
        """Bitwise equality of every weight."""
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays()))

    def dumps(self) -> str:
        lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
        for name in _NAMES:
            a = np.atleast_2d(getattr(self, name))
            lines.append(f"{name} {' '.join(str(s) for s in getattr(self, name).shape)}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in a)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModelParams":
        lines = text.splitlines()
        head = lines[0].split()
        if len(head) != 2 or head[0] != CHECKPOINT_MAGIC or int(head[1]) != CHECKPOINT_VERSION:
            raise ValueError("not a certgraph checkpoint")
        out, k = {}, 1
        for name in _NAMES:
            tag, *shape = lines[k].split()
            if tag != name:
                raise ValueError(f"expected {name} block, found {tag!r}")
            shape = tuple(int(s) for s in shape)
            rows = 1 if len(shape) == 1 else shape[0]
            vals = [float(t) for line in lines[k + 1 : k + 1 + rows] for t in line.split()]
            out[name] = np.asarray(vals, dtype=np.float64).reshape(shape)
            k += 1 + rows
        return cls(**out)


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 16
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    global_seed: int = 0
    task: str = "node"

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.task not in ("node", "graph"):
            raise ValueError(f"unknown task {self.task!r}")

    def as_dict(self) -> dict:
        return asdict(self)


def classifier_seed(global_seed: int, classifier_index: int) -> int:
    """Seed of sub-classifier ``classifier_index``; independent streams per index."""
    a, b = np.random.SeedSequence([int(global_seed), int(classifier_index)]).generate_state(2, dtype=np.uint32)
    return (int(a) << 32) | int(b)


def init_params(d: int, h: int, C: int, seed: int) -> ModelParams:
    """LeCun-uniform weights, U(-sqrt(3/fan_in), +sqrt(3/fan_in)); zero bias."""
    if min(d, h, C) < 1:
        raise ValueError(f"dimensions must be positive, got d={d}, h={h}, C={C}")
    rng = np.random.default_rng(seed)

    def u(fan_in, shape):
        s = math.sqrt(3.0 / fan_in)
        return rng.uniform(-s, s, size=shape)

    return ModelParams(u(d, (d, h)), u(h, (h, h)), u(h, (h, C)), np.zeros(C))


# ---------------------------------------------------------------------------
# ordered kernels


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` accumulated over the inner index in ascending order.

    ``cumsum`` adds strictly left to right, so the result does not depend on
    the BLAS build or thread count.
    """
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]))
    return np.cumsum(a[:, :, None] * b[None, :, :], axis=1)[:, -1, :]


def _colsum(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0:
        return np.zeros(a.shape[1])
    return np.cumsum(a, axis=0)[-1]


@dataclass
class Batch:
    """Disjoint union of graphs prepared for message passing."""

    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    inv_deg: np.ndarray  # 1/|N_in(v)|, 0 where empty
    node_targets: np.ndarray  # node task labels, -1 = no loss
    segment: np.ndarray = None  # graph id per node (graph task)
    num_graphs: int = 0
    graph_targets: np.ndarray = None

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _in_degree_inverse(dst, n):
    cnt = np.bincount(dst, minlength=n).astype(np.float64)
    inv = np.zeros(n)
    nz = cnt > 0
    inv[nz] = 1.0 / cnt[nz]
    return inv


def make_batch(graphs, task: str, node_targets=None, graph_targets=None, d: int | None = None) -> Batch:
    """Stack graphs (arcs from :func:`message_edges`) into one batch."""
    xs, srcs, dsts, segs, tg = [], [], [], [], []
    off = 0
    for k, g in enumerate(graphs):
        arcs = message_edges(g)
        xs.append(g.features)
        srcs.append(arcs[:, 0] + off)
        dsts.append(arcs[:, 1] + off)
        segs.append(np.full(g.num_nodes, k, dtype=np.int64))
        if node_targets is not None:
            tg.append(np.asarray(node_targets[k], dtype=np.int64))
        off += g.num_nodes
    if d is None:
        d = graphs[0].feature_dim if graphs else 0
    x = np.concatenate(xs) if xs else np.zeros((0, d))
    x = x.reshape(-1, d)
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    nt = np.concatenate(tg) if tg else np.full(x.shape[0], -1, dtype=np.int64)
    b = Batch(x, src, dst, _in_degree_inverse(dst, x.shape[0]), nt)
    if task == "graph":
        b.segment = np.concatenate(segs) if segs else np.zeros(0, dtype=np.int64)
        b.num_graphs = len(graphs)
        if graph_targets is not None:
            b.graph_targets = np.asarray(graph_targets, dtype=np.int64)
    return b


def _aggregate(h, b: Batch):
    out = np.zeros_like(h)
    np.add.at(out, b.dst, h[b.src])
    return out * b.inv_deg[:, None]


def _aggregate_T(g, b: Batch):
    out = np.zeros_like(g)
    np.add.at(out, b.src, g[b.dst] * b.inv_deg[b.dst, None])
    return out


def _readout(h, b: Batch):
    out = np.zeros((b.num_graphs, h.shape[1]))
    np.add.at(out, b.segment, h)
    sizes = np.bincount(b.segment, minlength=b.num_graphs).astype(np.float64)
    inv = np.zeros(b.num_graphs)
    inv[sizes > 0] = 1.0 / sizes[sizes > 0]
    return out * inv[:, None], inv


def _forward(p: ModelParams, b: Batch, task: str):
    z0 = _aggregate(b.x, b)
    p1 = _mm(z0, p.W0)
    h1 = np.maximum(p1, 0.0)
    z1 = _aggregate(h1, b)
    p2 = _mm(z1, p.W1)
    h2 = np.maximum(p2, 0.0)
    cache = dict(z0=z0, p1=p1, z1=z1, p2=p2, h2=h2)
    if task == "graph":
        r, inv = _readout(h2, b)
        cache.update(r=r, inv=inv)
        logits = _mm(r, p.W_out) + p.b_out
    else:
        logits = _mm(h2, p.W_out) + p.b_out
    return logits, cache


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(p, b: Batch, task: str, weight_decay: float = 0.0):
    """Mean cross-entropy over labelled items plus ``weight_decay/2 * ||W||^2``."""
    logits, c = _forward(p, b, task)
    if task == "graph":
        y = b.graph_targets
        rows = np.arange(len(y))
    else:
        rows = np.flatnonzero(b.node_targets >= 0)
        y = b.node_targets[rows]
    m = len(rows)
    if m == 0:
        raise TrainingError("empty training set")
    prob = _softmax(logits[rows])
    logp = np.log(np.maximum(prob[np.arange(m), y], 1e-300))
    loss = -_colsum(logp[:, None])[0] / m
    reg = 0.0
    for w in (p.W0, p.W1, p.W_out):
        reg += float(_colsum((w * w).reshape(-1, 1))[0])
    loss += 0.5 * weight_decay * reg

    dl = np.zeros_like(logits)
    g = prob.copy()
    g[np.arange(m), y] -= 1.0
    dl[rows] = g / m
    if task == "graph":
        dW_out = _mm(c["r"].T, dl)
        dr = _mm(dl, p.W_out.T)
        dh2 = dr[b.segment] * c["inv"][b.segment, None]
    else:
        dW_out = _mm(c["h2"].T, dl)
        dh2 = _mm(dl, p.W_out.T)
    db = _colsum(dl)
    dp2 = dh2 * (c["p2"] > 0)
    dW1 = _mm(c["z1"].T, dp2)
    dh1 = _aggregate_T(_mm(dp2, p.W1.T), b)
    dp1 = dh1 * (c["p1"] > 0)
    dW0 = _mm(c["z0"].T, dp1)
    grads = (
        dW0 + weight_decay * p.W0,
        dW1 + weight_decay * p.W1,
        dW_out + weight_decay * p.W_out,
        db,
    )
    return float(loss), grads


def forward(params: ModelParams, graph: Graph, task: str = "node") -> np.ndarray:
    """Node logits ``(n, C)`` for the node task, graph logits ``(1, C)`` for the graph task."""
    if graph.num_nodes and graph.feature_dim != params.dims[0]:
        raise ValueError(f"feature dim {graph.feature_dim} does not match params ({params.dims[0]})")
    b = make_batch([graph], task, d=params.dims[0])
    logits, _ = _forward(params, b, task)
    return logits


def argmax_smallest(logits) -> int:
    """Argmax with ties resolved toward the smallest class index."""
    return int(np.argmax(np.asarray(logits)))


def predict(params: ModelParams, graph: Graph, target=None, task: str = "node") -> int:
    """Class of node id ``target`` (node task) or of the whole graph (graph task).

    A target id absent from ``graph`` has an all-zero representation, so its
    class comes from the head bias alone.
    """
    if task == "graph":
        return argmax_smallest(forward(params, graph, "graph")[0])
    pos = np.flatnonzero(graph.ids == target)
    if len(pos) == 0:
        return argmax_smallest(params.b_out)
    return argmax_smallest(forward(params, graph, "node")[int(pos[0])])


class _Weights:
    __slots__ = _NAMES

    def __init__(self, W0, W1, W_out, b_out):
        self.W0, self.W1, self.W_out, self.b_out = W0, W1, W_out, b_out


def _adam(params: ModelParams, cfg: TrainConfig, batch: Batch, task: str) -> ModelParams:
    ws = [a.copy() for a in params.arrays()]
    m = [np.zeros_like(w) for w in ws]
    v = [np.zeros_like(w) for w in ws]
    b1, b2, eps = 0.9, 0.999, 1e-8
    # overflow shows up as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.epochs + 1):
            loss, grads = loss_and_grad(_Weights(*ws), batch, task, cfg.weight_decay)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {t}")
            c1 = 1.0 - b1**t
            c2 = 1.0 - b2**t
            for k in range(4):
                m[k] = b1 * m[k] + (1.0 - b1) * grads[k]
                v[k] = b2 * v[k] + (1.0 - b2) * grads[k] * grads[k]
                ws[k] = ws[k] - cfg.learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
    try:
        return ModelParams(*ws)
    except ValueError as exc:
        raise TrainingError(f"training diverged after {cfg.epochs} epochs: {exc}") from None


def batch_from_canonical(forms, task: str, graph_labels=None, d: int | None = None) -> Batch:
    graphs = [f.graph for f in forms]
    if task == "node":
        return make_batch(graphs, "node", node_targets=[f.targets for f in forms], d=d)
    return make_batch(graphs, "graph", graph_targets=graph_labels, d=d)


def train(subgraph_set: SubgraphSet, config: TrainConfig, classifier_index: int, num_classes: int,
          feature_dim: int | None = None) -> ModelParams:
    """Full-batch training of one sub-classifier on its canonical training set.

    The canonical form is all training ever sees, so two sets with equal
    canonical forms produce bit-identical parameters.
    """
    if subgraph_set.task != config.task:
        raise ValueError(f"subgraph set is for the {subgraph_set.task} task, config for {config.task}")
    forms = subgraph_set.canonical()
    if not forms:
        raise TrainingError("empty training set")
    d = feature_dim if feature_dim is not None else forms[0].graph.feature_dim
    batch = batch_from_canonical(forms, config.task, subgraph_set.labels, d=d)
    if config.task == "node" and not (batch.node_targets >= 0).any():
        raise TrainingError("empty training set")
    init = init_params(d, config.hidden_dim, num_classes, classifier_seed(config.global_seed, classifier_index))
    return _adam(init, config, batch, config.task)


def train_canonical(forms, config: TrainConfig, classifier_index: int, num_classes: int,
                    graph_labels=None) -> ModelParams:
    """Train directly on a sequence of :class:`CanonicalGraph`."""
    forms = list(forms)
    if not forms:
        raise TrainingError("empty training set")
    d = forms[0].graph.feature_dim
    batch = batch_from_canonical(forms, config.task, graph_labels, d=d)
    init = init_params(d, config.hidden_dim, num_classes, classifier_seed(config.global_seed, classifier_index))
    return _adam(init, config, batch, config.task)


__all__ = [
    "Batch",
    "CanonicalGraph",
    "ModelParams",
    "TrainConfig",
    "TrainingError",
    "classifier_seed",
    "forward",
    "init_params",
    "loss_and_grad",
    "make_batch",
    "predict",
    "train",
]
