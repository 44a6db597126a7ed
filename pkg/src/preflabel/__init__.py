"""Preferential labeling for graph neural networks on unattributed graphs.

Train a GCN node classifier under many random node labelings, learning from
the best one per graph; at inference pick the labeling with the highest
joint max-probability.  Tasks: maximum independent set and SAT certificates.
"""

from .config import RunConfig
from .graphs import Graph, Permutation, automorphisms, compose, inverse, permute_graph, permute_output
from .inference import Prediction, check_generalized_equivariance, predict
from .labeling import Strategy
from .nn import Arch, NodeClassifier, init_model, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, train

__all__ = [
    "Arch",
    "Graph",
    "NodeClassifier",
    "Permutation",
    "Prediction",
    "RunConfig",
    "Strategy",
    "TrainConfig",
    "automorphisms",
    "check_generalized_equivariance",
    "compose",
    "init_model",
    "inverse",
    "load_checkpoint",
    "permute_graph",
    "permute_output",
    "predict",
    "save_checkpoint",
    "train",
]
