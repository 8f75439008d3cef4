"""Graphs, the normalized Laplacian and its spectrum, kNN graphs, homophily."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ParameterError, SymmetryError, UndefinedRatioError

__all__ = [
    "Graph",
    "SpectralDecomposition",
    "normalized_laplacian",
    "spectral_decompose",
    "build_knn_graph",
    "homophily_ratio",
    "symmetrize_adjacency",
    "is_connected",
]

_CLAMP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Graph:
    """Dense undirected weighted graph.

    Parameters
    ----------
    adjacency : ndarray of shape (n, n)
        Symmetric, nonnegative weights. Zero means no edge.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ParameterError(f"adjacency must be a non-empty square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ParameterError("adjacency entries must be finite and nonnegative")
        if not np.array_equal(A, A.T):
            raise SymmetryError("adjacency is not symmetric; use symmetrize_adjacency first")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)

    @property
    def n_edges(self):
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues ascending.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.T


def symmetrize_adjacency(A):
    """Return ``(A + A.T) / 2``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def normalized_laplacian(g):
    """Symmetric normalized Laplacian ``D^-1/2 (D - A) D^-1/2``.

    Isolated nodes get ``d^-1/2 = 0``, so their rows and columns are zero.
    """
    A = g.adjacency
    d = g.degrees
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    L = (np.diag(d) - A) * inv_sqrt[:, None] * inv_sqrt[None, :]
    return 0.5 * (L + L.T)


def spectral_decompose(L, symmetry_tol=1e-10):
    """Eigendecomposition of a symmetric (Laplacian) matrix.

    Eigenvalues within 1e-8 outside ``[0, 2]`` are treated as round-off and
    clamped; larger excursions are returned untouched.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {L.shape}")
    asym = np.max(np.abs(L - L.T)) if L.size else 0.0
    if asym > symmetry_tol:
        raise SymmetryError(f"matrix is not symmetric (max |L - L.T| = {asym:.3e})")
    lam, U = np.linalg.eigh(0.5 * (L + L.T))
    lam = lam.copy()
    lo = (lam < 0) & (lam >= -_CLAMP_TOL)
    hi = (lam > 2) & (lam <= 2 + _CLAMP_TOL)
    lam[lo] = 0.0
    lam[hi] = 2.0
    return SpectralDecomposition(eigenvectors=U, eigenvalues=lam)


def build_knn_graph(X, k):
    """Unweighted kNN graph with union symmetrization and no self-loops.

    ``i ~ j`` iff j is among the k nearest (Euclidean) neighbours of i, or i
    among those of j. Distance ties go to the lower node index.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError("X must be a 2-d feature matrix")
    n = X.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if k >= n:
        raise ParameterError(f"k={k} must be smaller than the number of points n={n}")
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    # stable sort keeps lower indices first among equal distances
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    B = np.zeros((n, n))
    B[np.repeat(np.arange(n), k), nbrs.ravel()] = 1.0
    return Graph(np.maximum(B, B.T))


def homophily_ratio(g, y):
    """Fraction of edges whose two endpoints carry the same label."""
    y = np.asarray(y)
    if y.shape[0] != g.n:
        raise ParameterError(f"expected {g.n} labels, got {y.shape[0]}")
    i, j = np.nonzero(np.triu(g.adjacency, k=1) > 0)
    if i.size == 0:
        raise UndefinedRatioError("homophily ratio is undefined for a graph without edges")
    return float(np.mean(y[i] == y[j]))


def is_connected(g):
    """Breadth-first reachability from node 0 covers every node."""
    A = g.adjacency > 0
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = np.array([0])
    while frontier.size:
        nxt = np.nonzero(A[frontier].any(axis=0) & ~seen)[0]
        seen[nxt] = True
        frontier = nxt
    return bool(seen.all())
