"""Gaussian processes on graphs with transductive kernels.

The combined kernel ``(K1^-1 + R2)^-1`` couples a feature kernel ``K1`` with
a spectral graph regularizer ``R2 = U diag(r(lam)) U^T`` of the normalized
Laplacian. Hyperparameters are fitted by maximizing the training log
marginal likelihood.
"""

from .data import Dataset, Task, generate_swiss_roll, load_dataset, save_dataset
from .estimators import TransductiveGPClassifier, TransductiveGPRegressor
from .graph import Graph, build_knn_graph
from .kernels import HyperParams, KernelSpec, kernel_matrix, transductive_kernel

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Graph",
    "HyperParams",
    "KernelSpec",
    "Task",
    "TransductiveGPClassifier",
    "TransductiveGPRegressor",
    "build_knn_graph",
    "generate_swiss_roll",
    "kernel_matrix",
    "load_dataset",
    "save_dataset",
    "transductive_kernel",
]
