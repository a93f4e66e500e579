"""Command-line frontend: generate, divide, train, certify, fuzz, sweep.

Every subcommand writes its outputs under ``--out`` (default: ``$CERTGRAPH_OUT``
or ``./certgraph-out``) together with a ``manifest.json`` that echoes the parsed
configuration, the dataset digest and a digest of each output file.

Exit codes: 0 success, 1 soundness or run failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from certgraph import gnn, pipeline
from certgraph.division import (
    ConfigMismatchError,
    DivisionConfig,
    HashSpec,
    IndexOverflowError,
    SubgraphFamily,
    assignment_text,
    divide,
)
from certgraph.graph import Graph, NodeTaskDataset, ValidationError
from certgraph.io import DatasetFormatError, load_dataset, save_dataset
from certgraph.perturbation import PerturbationError
from certgraph.synthetic import generate_synthetic, pinned_motif, pinned_sbm

OUT_ENV = "CERTGRAPH_OUT"
DEFAULT_OUT = "certgraph-out"
DEFAULT_S = {"node": 50, "graph": 60}
ENSEMBLE_FILE = "ensemble.json"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("certgraph")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _non_negative(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return v


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _common(p: argparse.ArgumentParser, dataset: bool = True):
    if dataset:
        p.add_argument("--dataset", required=True, help="dataset file in the JSON interchange format")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--task", choices=("node", "graph"), default=None, help="default: taken from the dataset")
    p.add_argument("--mode", choices=("edge", "node"), default="edge", help="division strategy (default edge)")
    p.add_argument("--s", type=_positive, default=None, help="number of subgraphs (default 50 node task, 60 graph task)")
    p.add_argument("--hash", choices=("md5", "sha1", "sha256", "decimal-test"), default="md5")
    p.add_argument("--pad", type=_positive, default=8, help="digits per node index in hash strings (default 8)")
    p.add_argument("--seed", type=_non_negative, default=0, help="global training seed (default 0)")
    p.add_argument("--epochs", type=_positive, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden", type=_positive, default=16)
    p.add_argument("--jobs", type=_positive, default=1, help="parallel training workers (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--kind", choices=("sbm", "motif"), default="sbm")
    p.add_argument("--pinned", action="store_true", help="write the pinned reference dataset of this kind")
    p.add_argument("--data-seed", type=_non_negative, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("divide", help="divide the dataset's graphs and dump the subgraphs")
    _common(p)

    p = sub.add_parser("train", help="train the S sub-classifiers and write checkpoints")
    _common(p)

    p = sub.add_parser("certify", help="vote, certify the test items, write results and curve")
    _common(p)
    p.add_argument("--ensemble", default=None, help="directory written by `train` (default: train now)")
    p.add_argument("--max-p", type=_non_negative, default=None, help="largest p on the curve (default S//2)")

    p = sub.add_parser("fuzz", help="poison within certified budgets and check no prediction moves")
    _common(p)
    p.add_argument("--trials", type=_positive, default=200)
    p.add_argument("--max-injection-degree", type=_non_negative, default=20)
    p.add_argument("--broken-division", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("sweep", help="certified-accuracy curves across hashes or S values")
    _common(p)
    p.add_argument("--over", choices=("hash", "s"), default="hash")
    p.add_argument("--s-values", type=_int_list, default=[4, 6, 10])
    p.add_argument("--max-p", type=_non_negative, default=None)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    path = Path(args.dataset)
    if not path.is_file():
        raise UsageError(f"dataset file not found: {path}")
    ds = load_dataset(path, task=args.task)
    args.task = ds.task
    return ds


def _configs(args):
    S = args.s if args.s is not None else DEFAULT_S[args.task]
    division = DivisionConfig(args.mode, S, args.task, HashSpec(args.hash, args.pad))
    training = gnn.TrainConfig(
        hidden_dim=args.hidden,
        epochs=args.epochs,
        learning_rate=args.lr,
        weight_decay=gnn.TrainConfig.weight_decay,
        global_seed=args.seed,
        task=args.task,
    )
    return division, training


def _write(out: Path, name: str, text: str, outputs: dict):
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    outputs[name] = hashlib.sha256(text.encode()).hexdigest()


def _manifest(out: Path, args, outputs: dict, **extra):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "verbose", "func")}
    text = pipeline.run_manifest(command=args.command, config=config, outputs=outputs, **extra)
    (out / "manifest.json").write_text(text)


def _subgraph_doc(g: Graph) -> str:
    doc = {
        "directed": bool(g.directed),
        "node_ids": g.ids.tolist(),
        "features": g.features.tolist(),
        "edges": g.ids[g.edges].tolist() if g.num_edges else [],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _broken_divide(graph: Graph, config: DivisionConfig) -> SubgraphFamily:
    """Test-only stub that copies the whole graph into every subgraph."""
    return SubgraphFamily(graph, config, (graph,) * config.S)


def _graphs(ds):
    return [ds.graph] if isinstance(ds, NodeTaskDataset) else list(ds.graphs)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    out = _out_dir(args)
    if args.pinned:
        ds = pinned_sbm() if args.kind == "sbm" else pinned_motif()
    else:
        ds = generate_synthetic({"sbm": "sbm_node", "motif": "motif_graph"}[args.kind], None, args.data_seed)
    outputs = {}
    save_dataset(ds, out / "dataset.json")
    outputs["dataset.json"] = pipeline.dataset_digest(ds)
    _manifest(out, args, outputs)
    print(out / "dataset.json")
    return EXIT_OK


def cmd_divide(args) -> int:
    ds = _load(args)
    division, _ = _configs(args)
    out = _out_dir(args)
    outputs = {}
    assignments = []
    for k, g in enumerate(_graphs(ds)):
        fam = divide(g, division)
        assignments.append(assignment_text(g, division))
        for i in range(1, division.S + 1):
            _write(out, f"subgraphs/graph_{k:04d}/sub_{i:03d}.json", _subgraph_doc(fam[i]), outputs)
    _write(out, "assignment.txt", "".join(assignments), outputs)
    _manifest(out, args, outputs, division=division.as_dict(), dataset_digest=pipeline.dataset_digest(ds))
    print(f"divided {len(assignments)} graph(s) into {division.S} subgraphs each -> {out}")
    return EXIT_OK


def _save_ensemble(out: Path, ens: pipeline.Ensemble, outputs: dict):
    for i, p in enumerate(ens.params, start=1):
        _write(out, f"checkpoints/classifier_{i:03d}.params", p.dumps(), outputs)
    _write(out, ENSEMBLE_FILE, json.dumps(ens.manifest(), sort_keys=True, indent=1) + "\n", outputs)


def _load_ensemble(path: Path, division, training, ds) -> pipeline.Ensemble:
    meta_path = path / ENSEMBLE_FILE
    if not meta_path.is_file():
        raise UsageError(f"no {ENSEMBLE_FILE} in {path}; run `certgraph train` first")
    meta = json.loads(meta_path.read_text())
    if meta["division"] != division.as_dict():
        raise ConfigMismatchError(f"ensemble was divided with {meta['division']}, certify asked for {division.as_dict()}")
    if meta["dataset_digest"] != pipeline.dataset_digest(ds):
        raise ConfigMismatchError("ensemble was trained on a different dataset")
    params = []
    for i in range(1, meta["S"] + 1):
        params.append(gnn.ModelParams.loads((path / f"checkpoints/classifier_{i:03d}.params").read_text()))
    tc = gnn.TrainConfig(**meta["training"])
    return pipeline.Ensemble(division, tc, tuple(params), meta["num_classes"], meta["feature_dim"],
                             meta["dataset_digest"])


def cmd_train(args) -> int:
    ds = _load(args)
    division, training = _configs(args)
    out = _out_dir(args)
    ens = pipeline.build(ds, division, training, jobs=args.jobs)
    outputs = {}
    _save_ensemble(out, ens, outputs)
    _manifest(out, args, outputs, ensemble=ens.manifest())
    print(f"trained {ens.S} classifiers -> {out / 'checkpoints'}")
    return EXIT_OK


def cmd_certify(args) -> int:
    ds = _load(args)
    division, training = _configs(args)
    out = _out_dir(args)
    outputs = {}
    if args.ensemble:
        ens = _load_ensemble(Path(args.ensemble), division, training, ds)
    else:
        ens = pipeline.build(ds, division, training, jobs=args.jobs)
        _save_ensemble(out, ens, outputs)
    results = pipeline.certify(ens, ds)
    max_p = division.S // 2 if args.max_p is None else args.max_p
    curve = pipeline.certified_accuracy_curve(results, max_p)
    _write(out, "results.csv", pipeline.results_csv(results), outputs)
    _write(out, "curve.csv", pipeline.curve_csv(curve), outputs)
    _manifest(out, args, outputs, ensemble=ens.manifest(), max_p=max_p)
    print(f"voting accuracy {curve[0][1]:.4f} over {len(results)} test items -> {out / 'curve.csv'}")
    return EXIT_OK


def cmd_fuzz(args) -> int:
    ds = _load(args)
    division, training = _configs(args)
    pipeline.check_guard(ds, division)
    out = _out_dir(args)
    divide_fn = _broken_divide if args.broken_division else None
    report = pipeline.soundness_fuzz(
        ds, division, training, args.trials, seed=args.seed, jobs=args.jobs, divide_fn=divide_fn,
        max_injection_degree=args.max_injection_degree, stop_on_violation=True,
    )
    outputs = {}
    summary = report.summary()
    _write(out, "fuzz_report.txt", summary, outputs)
    for rec in report.failures:
        _write(out, f"replay/trial_{rec.trial:04d}.json", rec.perturbation.dumps(), outputs)
    _manifest(out, args, outputs, division=division.as_dict(), training=training.as_dict(),
              dataset_digest=pipeline.dataset_digest(ds))
    sys.stdout.write(summary)
    if report.violations:
        print(f"soundness violation; replay files under {out / 'replay'}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = _load(args)
    division, training = _configs(args)
    out = _out_dir(args)
    outputs = {}
    if args.over == "hash":
        curves = pipeline.hash_sweep(ds, division, training, max_p=args.max_p, jobs=args.jobs)
        for algo, curve in curves.items():
            _write(out, f"curve_{algo}.csv", pipeline.curve_csv(curve), outputs)
    else:
        res = pipeline.s_sweep(ds, division, training, args.s_values, max_p=args.max_p, jobs=args.jobs)
        for S, (curve, _) in res.items():
            _write(out, f"curve_S{S}.csv", pipeline.curve_csv(curve), outputs)
    _manifest(out, args, outputs, dataset_digest=pipeline.dataset_digest(ds))
    print(f"wrote {len(outputs)} curves -> {out}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "divide": cmd_divide,
    "train": cmd_train,
    "certify": cmd_certify,
    "fuzz": cmd_fuzz,
    "sweep": cmd_sweep,
}

_USAGE_ERRORS = (
    UsageError,
    ValidationError,
    DatasetFormatError,
    ConfigMismatchError,
    IndexOverflowError,
    PerturbationError,
    pipeline.GuardError,
    ValueError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except gnn.TrainingError as exc:
        print(f"certgraph: training failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except _USAGE_ERRORS as exc:
        print(f"certgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
