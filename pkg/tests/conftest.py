import numpy as np
import pytest

from tggp.graph import Graph, build_knn_graph, normalized_laplacian, spectral_decompose
from tggp.kernels import HyperParams, KernelSpec, Regularizer

GRAPH_REGULARIZERS = [r for r in Regularizer if r is not Regularizer.NONE]


def random_knn_graph(rng, n, k=3, m=2):
    X = rng.standard_normal((n, m))
    return X, build_knn_graph(X, min(k, n - 1))


def random_weighted_graph(rng, n, p=0.5):
    W = rng.uniform(0.1, 2.0, size=(n, n)) * (rng.uniform(size=(n, n)) < p)
    W = np.triu(W, 1)
    return Graph(W + W.T)


def spectrum(g):
    return spectral_decompose(normalized_laplacian(g))


def random_hp(rng, degree=4):
    return HyperParams(
        sigma1_sq=float(np.exp(rng.uniform(-2, 2))),
        lengthscale=float(np.exp(rng.uniform(-1, 1))),
        sigma2_sq=float(np.exp(rng.uniform(-2, 2))),
        # O(1) polynomial on the spectrum [0, 2] whatever the degree
        betas=tuple(rng.normal(0, 1, size=degree + 1) / 2.0 ** np.arange(degree + 1)),
        noise_sq=0.1,
        alpha=float(np.exp(rng.uniform(-1, 2))) + 2.0,
        sigma_diff=float(rng.uniform(0, 2)),
        p_steps=int(rng.integers(1, 4)),
        nu=float(np.exp(rng.uniform(-1, 1))),
        kappa=float(np.exp(rng.uniform(-1, 1))),
    )


def all_specs(degree=4):
    specs = [KernelSpec.feature_only(b) for b in ("rbf", "matern12")]
    for reg in GRAPH_REGULARIZERS:
        specs.append(KernelSpec.graph_only(reg, degree))
        for b in ("rbf", "matern12"):
            specs.append(KernelSpec.transductive(b, reg, degree))
    return specs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    return Graph(np.ones((3, 3)) - np.eye(3))


@pytest.fixture
def path2():
    return Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))
