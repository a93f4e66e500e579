"""Poisoning edits on training graphs, their application and budget accounting.

Edits name nodes by their hash ids (``Graph.ids``), never by row position, so
an edit means the same thing before and after earlier deletions. Injected
nodes receive ids ``base, base + 1, ...`` with ``base = max(existing ids) + 1``,
i.e. they are appended and every surviving node keeps its hash bucket.

Induced edges are counted once, in the first bucket that claims them:
E_{V-} (touching a deleted node), then E_{V+} (touching an injected node),
then E_{Vr} (touching a feature-modified node), then plain E+ / E-.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from certgraph.graph import Graph, GraphTaskDataset, NodeTaskDataset, sort_edges


class PerturbationError(ValueError):
    """The perturbation is inconsistent with the dataset it is applied to."""


class InfeasibleBudgetError(ValueError):
    pass


def _pair(u, v):
    u, v = int(u), int(v)
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Injection:
    features: tuple
    neighbors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        object.__setattr__(self, "neighbors", tuple(int(x) for x in self.neighbors))


@dataclass(frozen=True)
class GraphEdit:
    """Edits on one training graph (``graph`` indexes ``dataset.graphs``; 0 for the node task)."""

    graph: int = 0
    edge_insertions: tuple = ()
    edge_deletions: tuple = ()
    node_injections: tuple = ()
    node_deletions: tuple = ()
    feature_modifications: tuple = ()  # ((node id, features), ...)

    def __post_init__(self):
        object.__setattr__(self, "edge_insertions", tuple(_pair(*e) for e in self.edge_insertions))
        object.__setattr__(self, "edge_deletions", tuple(_pair(*e) for e in self.edge_deletions))
        object.__setattr__(self, "node_injections", tuple(
            j if isinstance(j, Injection) else Injection(*j) for j in self.node_injections))
        object.__setattr__(self, "node_deletions", tuple(int(v) for v in self.node_deletions))
        mods = self.feature_modifications
        if isinstance(mods, dict):
            mods = sorted(mods.items())
        object.__setattr__(self, "feature_modifications", tuple(
            (int(v), tuple(float(x) for x in f)) for v, f in mods))

    def is_empty(self) -> bool:
        return not (self.edge_insertions or self.edge_deletions or self.node_injections
                    or self.node_deletions or self.feature_modifications)


@dataclass(frozen=True)
class Perturbation:
    edits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "edits", tuple(self.edits))

    def to_dict(self) -> dict:
        return {
            "edits": [
                {
                    "graph": e.graph,
                    "edge_insertions": [list(p) for p in e.edge_insertions],
                    "edge_deletions": [list(p) for p in e.edge_deletions],
                    "node_injections": [
                        {"features": list(j.features), "neighbors": list(j.neighbors)} for j in e.node_injections
                    ],
                    "node_deletions": list(e.node_deletions),
                    "feature_modifications": [[v, list(f)] for v, f in e.feature_modifications],
                }
                for e in self.edits
            ]
        }

    def dumps(self) -> str:
        """Text form used to replay fuzz failures."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Perturbation":
        doc = json.loads(text)
        edits = []
        for e in doc["edits"]:
            edits.append(GraphEdit(
                graph=e["graph"],
                edge_insertions=[tuple(p) for p in e["edge_insertions"]],
                edge_deletions=[tuple(p) for p in e["edge_deletions"]],
                node_injections=[Injection(j["features"], j["neighbors"]) for j in e["node_injections"]],
                node_deletions=e["node_deletions"],
                feature_modifications=[(v, f) for v, f in e["feature_modifications"]],
            ))
        return cls(tuple(edits))


@dataclass
class Accounting:
    """Edge and node sets of a perturbation, each edge in exactly one bucket."""

    E_plus: set = field(default_factory=set)
    E_minus: set = field(default_factory=set)
    E_Vplus: set = field(default_factory=set)
    E_Vminus: set = field(default_factory=set)
    E_Vr: set = field(default_factory=set)
    V_plus: int = 0
    V_minus: int = 0
    V_r: int = 0

    def merge(self, other: "Accounting", graph: int) -> None:
        """Fold in the accounting of another graph; edges are tagged by graph index."""
        for name in ("E_plus", "E_minus", "E_Vplus", "E_Vminus", "E_Vr"):
            getattr(self, name).update((graph,) + e for e in getattr(other, name))
        self.V_plus += other.V_plus
        self.V_minus += other.V_minus
        self.V_r += other.V_r

    def edge_centric(self) -> int:
        return len(self.E_plus) + len(self.E_minus) + len(self.E_Vplus) + len(self.E_Vminus) + len(self.E_Vr)

    def node_centric(self, task: str) -> int:
        k = 2 if task == "node" else 1
        return k * (len(self.E_plus) + len(self.E_minus)) + self.V_plus + self.V_minus + self.V_r


def _graph_of(dataset, edit: GraphEdit) -> Graph:
    if isinstance(dataset, NodeTaskDataset):
        if edit.graph != 0:
            raise PerturbationError(f"node-task edits must target graph 0, got {edit.graph}")
        return dataset.graph
    if edit.graph not in set(dataset.train_idx.tolist()):
        raise PerturbationError(f"graph {edit.graph} is not a training graph")
    return dataset.graphs[edit.graph]


def _injected_ids(g: Graph, edit: GraphEdit) -> list[int]:
    base = int(g.ids.max()) + 1 if g.num_nodes else 0
    return [base + k for k in range(len(edit.node_injections))]


def _resolve(g: Graph, edit: GraphEdit, protected: set[int]):
    """Validate ``edit`` against ``g``; return (accounting, final edge set, injected ids)."""
    d = g.feature_dim
    ids = set(g.ids.tolist())
    orig = g.edge_set()
    deleted = set(edit.node_deletions)
    modified = {v for v, _ in edit.feature_modifications}
    injected = _injected_ids(g, edit)
    inj = set(injected)

    if len(deleted) != len(edit.node_deletions):
        raise PerturbationError("node deleted twice")
    if len(modified) != len(edit.feature_modifications):
        raise PerturbationError("node feature modified twice")
    for v in deleted:
        if v not in ids:
            raise PerturbationError(f"deleted node {v} absent")
    for v, f in edit.feature_modifications:
        if v not in ids:
            raise PerturbationError(f"feature-modified node {v} absent")
        if v in deleted:
            raise PerturbationError(f"node {v} both deleted and feature-modified")
        if len(f) != d:
            raise PerturbationError(f"feature vector for node {v} has length {len(f)}, expected {d}")
    clash = (deleted | modified) & protected
    if clash:
        raise PerturbationError(f"node {min(clash)} is a training node and may not be deleted or modified")

    alive = (ids - deleted) | inj
    for e in edit.edge_deletions:
        if e not in orig:
            raise PerturbationError(f"deleted edge {e} absent")
    if len(set(edit.edge_deletions)) != len(edit.edge_deletions):
        raise PerturbationError("edge deleted twice")
    added = set()
    for e in edit.edge_insertions:
        if e[0] == e[1]:
            raise PerturbationError(f"inserted self-loop {e}")
        if e in orig or e in added:
            raise PerturbationError(f"inserted edge {e} already present")
        if e[0] not in alive or e[1] not in alive:
            raise PerturbationError(f"inserted edge {e} touches a missing or deleted node")
        added.add(e)
    for k, j in enumerate(edit.node_injections):
        if len(j.features) != d:
            raise PerturbationError(f"injected node {injected[k]} has {len(j.features)} features, expected {d}")
        for u in j.neighbors:
            e = _pair(injected[k], u)
            if u == injected[k] or u not in alive:
                raise PerturbationError(f"injected edge {e} touches a missing or deleted node")
            if e in added:
                raise PerturbationError(f"injected edge {e} listed twice")
            added.add(e)

    removed = {e for e in orig if e[0] in deleted or e[1] in deleted} | set(edit.edge_deletions)
    final = (orig - removed) | added

    acc = Accounting(V_plus=len(injected), V_minus=len(deleted), V_r=len(modified))
    for e in sorted(removed | added):
        if e[0] in deleted or e[1] in deleted:
            acc.E_Vminus.add(e)
        elif e[0] in inj or e[1] in inj:
            acc.E_Vplus.add(e)
        elif e[0] in modified or e[1] in modified:
            acc.E_Vr.add(e)
        elif e in removed:
            acc.E_minus.add(e)
        else:
            acc.E_plus.add(e)
    for e in sorted((orig | final) - removed - added):
        if e[0] in modified or e[1] in modified:
            acc.E_Vr.add(e)
    return acc, final, injected


def _protected(dataset) -> set[int]:
    if isinstance(dataset, NodeTaskDataset):
        return set(dataset.graph.ids[dataset.train_mask].tolist())
    return set()


def account(dataset, perturbation: Perturbation) -> Accounting:
    total = Accounting()
    seen = set()
    for edit in perturbation.edits:
        if edit.graph in seen:
            raise PerturbationError(f"graph {edit.graph} edited twice; merge the edits")
        seen.add(edit.graph)
        acc, _, _ = _resolve(_graph_of(dataset, edit), edit, _protected(dataset))
        total.merge(acc, edit.graph)
    return total


def budget_edge_centric(perturbation: Perturbation, dataset) -> int:
    """``|E+| + |E-| + |E_{V+}| + |E_{V-}| + |E_{Vr}|`` summed over edited graphs."""
    return account(dataset, perturbation).edge_centric()


def budget_node_centric(perturbation: Perturbation, dataset, task: str | None = None) -> int:
    """``2(|E+| + |E-|) + |V+| + |V-| + |Vr|`` (node task) or with coefficient 1 (graph task)."""
    return account(dataset, perturbation).node_centric(task or dataset.task)


def budget(perturbation: Perturbation, dataset, mode: str) -> int:
    if mode in ("edge_centric", "edge"):
        return budget_edge_centric(perturbation, dataset)
    return budget_node_centric(perturbation, dataset)


def apply_edit(g: Graph, edit: GraphEdit, protected=frozenset()):
    """Return ``(g', kept_positions)``; injected rows follow the kept rows."""
    _, final, injected = _resolve(g, edit, set(protected))
    deleted = set(edit.node_deletions)
    keep = np.array([p for p, i in enumerate(g.ids.tolist()) if i not in deleted], dtype=np.int64)
    x = g.features[keep].copy()
    for v, f in edit.feature_modifications:
        x[np.flatnonzero(g.ids[keep] == v)[0]] = f
    if injected:
        x = np.vstack([x, np.array([j.features for j in edit.node_injections], dtype=np.float64).reshape(-1, g.feature_dim)])
    new_ids = np.concatenate([g.ids[keep], np.array(injected, dtype=np.int64)])
    pos = {int(i): p for p, i in enumerate(new_ids.tolist())}
    edges = [(pos[u], pos[v]) for u, v in sorted(final)]
    return Graph(x, sort_edges(edges), directed=False, ids=new_ids), keep


def apply(dataset, perturbation: Perturbation):
    """The poisoned dataset: every edit applied to its training graph."""
    protected = _protected(dataset)
    account(dataset, perturbation)  # validates, including duplicate graph edits
    if isinstance(dataset, NodeTaskDataset):
        if not perturbation.edits:
            return dataset
        (edit,) = perturbation.edits
        g, keep = apply_edit(dataset.graph, edit, protected)
        extra = g.num_nodes - len(keep)

        def grow(a, fill):
            return np.concatenate([a[keep], np.full(extra, fill, dtype=a.dtype)])

        return NodeTaskDataset(
            g,
            grow(dataset.labels, 0),
            grow(dataset.train_mask, False),
            grow(dataset.val_mask, False),
            grow(dataset.test_mask, False),
            dataset.num_classes,
        )
    graphs = list(dataset.graphs)
    for edit in perturbation.edits:
        graphs[edit.graph], _ = apply_edit(graphs[edit.graph], edit)
    return GraphTaskDataset(graphs, dataset.labels, dataset.train_idx, dataset.val_idx, dataset.test_idx,
                            dataset.num_classes)


# ---------------------------------------------------------------------------
# random perturbations

BUDGET_KEYS = ("edge_insertions", "edge_deletions", "node_injections", "node_deletions", "feature_modifications")


@dataclass
class _Draft:
    g: Graph
    protected: set
    ins: list = field(default_factory=list)
    dels: list = field(default_factory=list)
    inj: list = field(default_factory=list)
    vdel: list = field(default_factory=list)
    mods: list = field(default_factory=list)

    @property
    def base(self):
        return int(self.g.ids.max()) + 1 if self.g.num_nodes else 0

    def alive(self):
        gone = set(self.vdel)
        return [i for i in self.g.ids.tolist() if i not in gone]

    def deletable_nodes(self):
        taken = set(self.vdel) | {v for v, _ in self.mods} | self.protected
        touched = {u for e in self.ins + self.dels for u in e}
        return [i for i in self.g.ids.tolist() if i not in taken and i not in touched]

    def modifiable_nodes(self):
        taken = set(self.vdel) | {v for v, _ in self.mods} | self.protected
        return [i for i in self.g.ids.tolist() if i not in taken]

    def deletable_edges(self):
        gone = set(self.vdel)
        used = set(self.dels)
        return [e for e in sorted(self.g.edge_set()) if e not in used and e[0] not in gone and e[1] not in gone]

    def insertable_edges(self):
        nodes = self.alive()
        present = self.g.edge_set() | set(self.ins)
        return [(a, b) for k, a in enumerate(nodes) for b in nodes[k + 1:] if (a, b) not in present]


def sample_perturbation(dataset, budget_spec: dict, seed: int) -> Perturbation:
    """A uniformly random valid perturbation with exactly the requested counts.

    ``budget_spec`` maps any of :data:`BUDGET_KEYS` to a count; ``injection_degree``
    (default 1) fixes the number of edges of each injected node. For the graph
    task every manipulation lands on a uniformly chosen training graph that can
    still host it.
    """
    unknown = set(budget_spec) - set(BUDGET_KEYS) - {"injection_degree", "feature_scale"}
    if unknown:
        raise ValueError(f"unknown budget keys {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    tau = int(budget_spec.get("injection_degree", 1))
    scale = float(budget_spec.get("feature_scale", 1.0))
    protected = _protected(dataset)
    if isinstance(dataset, NodeTaskDataset):
        drafts = {0: _Draft(dataset.graph, protected)}
    else:
        drafts = {int(k): _Draft(dataset.graphs[int(k)], set()) for k in dataset.train_idx.tolist()}
    order = sorted(drafts)

    def place(kind, pick):
        for k in rng.permutation(order).tolist() if len(order) > 1 else order:
            if pick(drafts[k]):
                return
        raise InfeasibleBudgetError(f"cannot place another {kind}")

    def choose(items):
        return items[int(rng.integers(len(items)))] if items else None

    def del_node(dr):
        v = choose(dr.deletable_nodes())
        return v is not None and not dr.vdel.append(v)

    def mod_node(dr):
        v = choose(dr.modifiable_nodes())
        if v is None:
            return False
        dr.mods.append((v, tuple((scale * rng.standard_normal(dr.g.feature_dim)).tolist())))
        return True

    def del_edge(dr):
        e = choose(dr.deletable_edges())
        return e is not None and not dr.dels.append(e)

    def ins_edge(dr):
        e = choose(dr.insertable_edges())
        return e is not None and not dr.ins.append(e)

    def inject(dr):
        pool = dr.alive() + [dr.base + k for k in range(len(dr.inj))]
        if len(pool) < tau:
            return False
        nbrs = sorted(rng.choice(pool, size=tau, replace=False).tolist()) if tau else []
        dr.inj.append(Injection(tuple((scale * rng.standard_normal(dr.g.feature_dim)).tolist()), tuple(nbrs)))
        return True

    for key, fn in (("node_deletions", del_node), ("feature_modifications", mod_node),
                    ("edge_deletions", del_edge), ("edge_insertions", ins_edge), ("node_injections", inject)):
        for _ in range(int(budget_spec.get(key, 0))):
            place(key, fn)

    edits = []
    for k in order:
        dr = drafts[k]
        e = GraphEdit(k, tuple(dr.ins), tuple(dr.dels), tuple(dr.inj), tuple(dr.vdel), tuple(dr.mods))
        if not e.is_empty():
            edits.append(e)
    return Perturbation(tuple(edits))
