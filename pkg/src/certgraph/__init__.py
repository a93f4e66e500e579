"""Hash-partitioned voting ensembles of graph classifiers with certified
robustness against training-set poisoning."""

__version__ = "0.1.0"

from certgraph.graph import (
    Graph,
    GraphTaskDataset,
    NodeTaskDataset,
    ValidationError,
    validate,
)
from certgraph.division import DivisionConfig, HashSpec, divide
from certgraph.gnn import ModelParams, TrainConfig
from certgraph.voting import Certificate, VoteTally, certified_size, tally
from certgraph.perturbation import GraphEdit, Injection, Perturbation
from certgraph.pipeline import Ensemble, build, certify, certified_accuracy_curve

__all__ = [
    "Certificate",
    "DivisionConfig",
    "Ensemble",
    "Graph",
    "GraphEdit",
    "GraphTaskDataset",
    "HashSpec",
    "Injection",
    "ModelParams",
    "NodeTaskDataset",
    "Perturbation",
    "TrainConfig",
    "ValidationError",
    "VoteTally",
    "build",
    "certified_accuracy_curve",
    "certified_size",
    "certify",
    "divide",
    "tally",
    "validate",
]
