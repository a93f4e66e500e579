"""Divide, train S sub-classifiers, vote, certify, and fuzz the certificates."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from certgraph import gnn
from certgraph.division import (
    DivisionConfig,
    HashSpec,
    TrainingSets,
    count_differing_sets,
    divide,
    divide_training_set,
)
from certgraph.graph import GraphTaskDataset, NodeTaskDataset
from certgraph.io import dumps as dataset_dumps
from certgraph.perturbation import (
    InfeasibleBudgetError,
    Perturbation,
    account,
    apply,
    sample_perturbation,
)
from certgraph.voting import Certificate, VoteTally, certified_size, tally

log = logging.getLogger(__name__)

GUARD_MAX_NODES = 200
GUARD_MAX_GRAPHS = 50
GUARD_MAX_S = 10
SWEEP_HASHES = ("md5", "sha1", "sha256")


class GuardError(ValueError):
    """Input too large for exhaustive desk-scale fuzzing."""


def dataset_digest(dataset) -> str:
    return hashlib.sha256(dataset_dumps(dataset).encode()).hexdigest()


def _feature_dim(dataset) -> int:
    if isinstance(dataset, NodeTaskDataset):
        return dataset.graph.feature_dim
    return dataset.graphs[0].feature_dim if dataset.graphs else 0


@dataclass(frozen=True, eq=False)
class Ensemble:
    division: DivisionConfig
    training: gnn.TrainConfig
    params: tuple
    num_classes: int
    feature_dim: int
    dataset_digest: str

    @property
    def S(self) -> int:
        return len(self.params)

    def manifest(self) -> dict:
        return {
            "division": self.division.as_dict(),
            "training": self.training.as_dict(),
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "dataset_digest": self.dataset_digest,
            "S": self.S,
        }


def _train_one(s, config, index, num_classes, d):
    return gnn.train(s, config, index, num_classes, feature_dim=d)


def train_sets(sets: TrainingSets, config: gnn.TrainConfig, num_classes: int, feature_dim: int,
               jobs: int = 1) -> tuple:
    """Train one classifier per set; classifier ``i`` is seeded by ``(global_seed, i)``."""
    if jobs == 1:
        out = []
        for s in sets:
            try:
                out.append(_train_one(s, config, s.index, num_classes, feature_dim))
            except gnn.TrainingError as exc:
                raise gnn.TrainingError(f"classifier {s.index}: {exc}") from None
        return tuple(out)
    from joblib import Parallel, delayed

    return tuple(
        Parallel(n_jobs=jobs)(delayed(_train_one)(s, config, s.index, num_classes, feature_dim) for s in sets)
    )


def build(dataset, division_config: DivisionConfig, train_config: gnn.TrainConfig, jobs: int = 1,
          divide_fn=None) -> Ensemble:
    if train_config.task != dataset.task:
        raise ValueError(f"train config is for the {train_config.task} task, dataset is {dataset.task}")
    sets = divide_training_set(dataset, division_config, divide_fn=divide_fn)
    d = _feature_dim(dataset)
    params = train_sets(sets, train_config, dataset.num_classes, d, jobs=jobs)
    return Ensemble(division_config, train_config, params, dataset.num_classes, d, dataset_digest(dataset))


@dataclass(frozen=True)
class CertifiedResult:
    item: int
    label: int
    prediction: int
    certificate: Certificate
    tally: VoteTally

    @property
    def correct(self) -> bool:
        return self.prediction == self.label


def vote_matrix(ensemble: Ensemble, dataset, targets, divide_fn=None) -> np.ndarray:
    """``(S, len(targets))`` array: the class each sub-classifier gives each target."""
    divide_fn = divide_fn or divide
    cfg = ensemble.division
    if cfg.task != dataset.task:
        raise ValueError(f"ensemble divides for the {cfg.task} task, dataset is {dataset.task}")
    if _feature_dim(dataset) != ensemble.feature_dim:
        raise ValueError("dataset feature dimension differs from the ensemble's")
    targets = np.asarray(targets, dtype=np.int64)
    votes = np.zeros((ensemble.S, len(targets)), dtype=np.int64)
    if isinstance(dataset, NodeTaskDataset):
        fam = divide_fn(dataset.graph, cfg)
        for i, p in enumerate(ensemble.params):
            logits = gnn.forward(p, fam[i + 1], "node")
            votes[i] = np.argmax(logits[targets], axis=1) if len(targets) else []
    else:
        for j, k in enumerate(targets.tolist()):
            fam = divide_fn(dataset.graphs[k], cfg)
            for i, p in enumerate(ensemble.params):
                votes[i, j] = gnn.predict(p, fam[i + 1], task="graph")
    return votes


def certify(ensemble: Ensemble, dataset, targets=None, divide_fn=None) -> list[CertifiedResult]:
    """Vote and certify each target (default: the test nodes / test graphs)."""
    if targets is None:
        targets = dataset.test_nodes if isinstance(dataset, NodeTaskDataset) else dataset.test_idx
    targets = np.asarray(targets, dtype=np.int64)
    votes = vote_matrix(ensemble, dataset, targets, divide_fn=divide_fn)
    out = []
    for j, item in enumerate(targets.tolist()):
        t = tally(votes[:, j], ensemble.num_classes)
        cert = certified_size(t, ensemble.division.mode, ensemble.division.task)
        out.append(CertifiedResult(item, int(dataset.labels[item]), cert.winner, cert, t))
    return out


def certified_accuracy_curve(results, max_p: int) -> list[tuple[int, float]]:
    """Fraction of items that are correct with certified size at least ``p``, for ``p = 0..max_p``."""
    results = list(results)
    if not results:
        raise ValueError("no results to summarise")
    n = len(results)
    sizes = np.array([r.certificate.certified_size if r.correct else -1 for r in results])
    return [(p, float((sizes >= p).sum()) / n) for p in range(max_p + 1)]


def curve_csv(curve) -> str:
    lines = ["p,certified_accuracy"]
    lines += [f"{p},{acc:.6f}" for p, acc in curve]
    return "\n".join(lines) + "\n"


def results_csv(results) -> str:
    lines = ["item,label,prediction,runner_up,certified_size,correct,votes"]
    for r in results:
        c = r.certificate
        votes = " ".join(str(v) for v in r.tally.counts)
        lines.append(f"{r.item},{r.label},{r.prediction},{c.runner_up},{c.certified_size},{int(r.correct)},{votes}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# soundness fuzzing


@dataclass
class TrialRecord:
    trial: int
    target: int
    certified: int
    budget: int
    differing_sets: int
    changed_classifiers: int
    flips: list = field(default_factory=list)
    perturbation: Perturbation = None


@dataclass
class FuzzReport:
    mode: str
    task: str
    trials: int = 0
    skipped: int = 0
    flips: int = 0
    bound_violations: int = 0
    surrogate_mismatches: int = 0
    max_differing_sets: int = 0
    max_budget: int = 0
    max_injection_degree: int = 0
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.flips + self.bound_violations

    def summary(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"task: {self.task}",
            f"trials: {self.trials}",
            f"skipped: {self.skipped}",
            f"prediction flips: {self.flips}",
            f"bound violations: {self.bound_violations}",
            f"violations: {self.violations}",
            f"surrogate mismatches: {self.surrogate_mismatches}",
            f"max differing sets observed: {self.max_differing_sets}",
            f"max perturbation budget: {self.max_budget}",
            f"max injected-node degree: {self.max_injection_degree}",
        ]
        for rec in self.failures:
            lines.append(
                f"FAIL trial {rec.trial}: target {rec.target} P={rec.certified} budget={rec.budget} "
                f"differing={rec.differing_sets} flips={rec.flips}"
            )
        return "\n".join(lines) + "\n"


def check_guard(dataset, config: DivisionConfig):
    if config.S > GUARD_MAX_S:
        raise GuardError(f"fuzzing needs S <= {GUARD_MAX_S}, got {config.S}; lower --s")
    if isinstance(dataset, NodeTaskDataset):
        if dataset.graph.num_nodes > GUARD_MAX_NODES:
            raise GuardError(
                f"fuzzing needs <= {GUARD_MAX_NODES} nodes, got {dataset.graph.num_nodes}; use a smaller dataset"
            )
    elif len(dataset.graphs) > GUARD_MAX_GRAPHS:
        raise GuardError(f"fuzzing needs <= {GUARD_MAX_GRAPHS} graphs, got {len(dataset.graphs)}; use a smaller dataset")


_KINDS = ("edge_insertions", "edge_deletions", "node_injections", "node_deletions", "feature_modifications")


def sample_within_budget(dataset, mode: str, limit: int, rng: np.random.Generator,
                         max_injection_degree: int = 20, attempts: int = 200) -> Perturbation:
    """Random mixed perturbation whose budget under ``mode`` lies in ``[1, limit]``."""
    for _ in range(attempts):
        m = int(rng.integers(1, limit + 1))
        spec = {}
        for _ in range(m):
            k = _KINDS[int(rng.integers(len(_KINDS)))]
            spec[k] = spec.get(k, 0) + 1
        cap = max_injection_degree if mode == "node_centric" else min(max_injection_degree, limit)
        spec["injection_degree"] = int(rng.integers(0, cap + 1))
        try:
            pert = sample_perturbation(dataset, spec, int(rng.integers(2**31)))
        except InfeasibleBudgetError:
            continue
        acc = account(dataset, pert)
        b = acc.edge_centric() if mode == "edge_centric" else acc.node_centric(dataset.task)
        if 1 <= b <= limit:
            return pert
    raise InfeasibleBudgetError(f"no perturbation with budget in [1, {limit}] found")


def soundness_fuzz(dataset, division_config: DivisionConfig, train_config: gnn.TrainConfig, trials: int,
                   seed: int = 0, jobs: int = 1, divide_fn=None, max_injection_degree: int = 20,
                   stop_on_violation: bool = False) -> FuzzReport:
    """Poison within the certified budget, retrain everything, and check nothing moved.

    Each trial picks a test item with certified size ``P >= 1``, samples a
    perturbation of budget ``1..P``, retrains all S classifiers on the poisoned
    training set and re-certifies the clean test input. Every item whose
    certificate covers the sampled budget must keep its prediction, and the
    number of differing canonical training sets must not exceed the budget.
    """
    check_guard(dataset, division_config)
    cfg = division_config
    mode = cfg.mode
    clean_sets = divide_training_set(dataset, cfg, divide_fn=divide_fn)
    d = _feature_dim(dataset)
    clean_params = train_sets(clean_sets, train_config, dataset.num_classes, d, jobs=jobs)
    ens = Ensemble(cfg, train_config, clean_params, dataset.num_classes, d, dataset_digest(dataset))
    base = certify(ens, dataset, divide_fn=divide_fn)
    eligible = [r for r in base if r.certificate.certified_size >= 1]
    report = FuzzReport(mode=mode, task=cfg.task)
    if not eligible:
        log.warning("no test item has certified size >= 1; nothing to fuzz")
        report.skipped = trials
        return report
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        target = eligible[int(rng.integers(len(eligible)))]
        P = target.certificate.certified_size
        try:
            pert = sample_within_budget(dataset, mode, P, rng, max_injection_degree)
        except InfeasibleBudgetError:
            report.skipped += 1
            continue
        acc = account(dataset, pert)
        b = acc.edge_centric() if mode == "edge_centric" else acc.node_centric(dataset.task)
        poisoned = apply(dataset, pert)
        sets = divide_training_set(poisoned, cfg, divide_fn=divide_fn)
        differing = count_differing_sets(clean_sets, sets)
        params = train_sets(sets, train_config, dataset.num_classes, d, jobs=jobs)
        changed = sum(not a.identical(c) for a, c in zip(clean_params, params))
        poisoned_ens = replace(ens, params=params)
        after = certify(poisoned_ens, dataset, divide_fn=divide_fn)
        flips = [
            r0.item
            for r0, r1 in zip(base, after)
            if r0.certificate.certified_size >= b and r1.prediction != r0.prediction
        ]
        rec = TrialRecord(t, target.item, P, b, differing, changed, flips, pert)
        report.trials += 1
        report.records.append(rec)
        report.max_differing_sets = max(report.max_differing_sets, differing)
        report.max_budget = max(report.max_budget, b)
        degrees = [len(j.neighbors) for e in pert.edits for j in e.node_injections]
        report.max_injection_degree = max([report.max_injection_degree, *degrees])
        if changed != differing:
            report.surrogate_mismatches += 1
        bad = False
        if flips:
            report.flips += len(flips)
            bad = True
        if differing > b:
            report.bound_violations += 1
            bad = True
        if bad:
            report.failures.append(rec)
            if stop_on_violation:
                break
    return report


# ---------------------------------------------------------------------------
# sweeps


def hash_sweep(dataset, division_config: DivisionConfig, train_config: gnn.TrainConfig,
               hashes=SWEEP_HASHES, max_p: int | None = None, jobs: int = 1) -> dict:
    """Certified-accuracy curve per hash algorithm, all else fixed."""
    curves = {}
    for algo in hashes:
        if algo.replace("-", "_") == "decimal_test":
            raise ValueError("decimal_test is a test oracle and cannot be swept")
        cfg = replace(division_config, hash=HashSpec(algo, division_config.hash.pad_width))
        ens = build(dataset, cfg, train_config, jobs=jobs)
        mp = cfg.S // 2 if max_p is None else max_p
        curves[cfg.hash.algorithm] = certified_accuracy_curve(certify(ens, dataset), mp)
    return curves


def s_sweep(dataset, division_config: DivisionConfig, train_config: gnn.TrainConfig, S_values,
            max_p: int | None = None, jobs: int = 1) -> dict:
    """Certified-accuracy curve and raw results per number of subgraphs."""
    out = {}
    for S in S_values:
        cfg = replace(division_config, S=int(S))
        ens = build(dataset, cfg, train_config, jobs=jobs)
        res = certify(ens, dataset)
        mp = max(S_values) // 2 if max_p is None else max_p
        out[int(S)] = (certified_accuracy_curve(res, mp), res)
    return out


def run_manifest(**sections) -> str:
    """JSON manifest echoing every config value needed to reproduce an output."""
    from certgraph import __version__

    doc = {"package": "certgraph", "version": __version__}
    doc.update(sections)
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"
