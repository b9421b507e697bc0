"""Conditional normalizing flows for zero-shot feature synthesis."""

from .data import BenchmarkSpec, Dataset, generate_benchmark, load_dataset
from .evaluation import EvalReport, SynthesisConfig, evaluate, synthesize
from .flow import CouplingLayer, FlowModel, PermutationLayer, log_likelihood
from .perturbation import PerturbConfig, perturb_batch
from .semantics import AttributeTable, SemanticEmbedder, compute_anchors, embed, geometry_loss
from .tensor import Tensor
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AttributeTable", "BenchmarkSpec", "CouplingLayer", "Dataset", "EvalReport", "FlowModel",
    "PermutationLayer", "PerturbConfig", "SemanticEmbedder", "SynthesisConfig", "Tensor",
    "TrainConfig", "compute_anchors", "embed", "evaluate", "generate_benchmark", "geometry_loss",
    "load_dataset", "log_likelihood", "perturb_batch", "synthesize", "train",
]
