"""Feature kernels, spectral graph regularizers and the transductive kernel.

The transductive kernel combines a feature-space Gram matrix ``K1`` over all
nodes with a graph regularizer ``R2 = U diag(r(lam)) U.T``::

    K = (K1^-1 + R2)^-1 = K1 - K1 (I + R2 K1)^-1 R2 K1

The right-hand form never inverts ``K1``, which is routinely near-singular for
smooth base kernels.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .exceptions import ConditioningError, InvariantViolation, ParameterError

__all__ = [
    "Base",
    "Regularizer",
    "Mode",
    "KernelSpec",
    "HyperParams",
    "softplus",
    "base_kernel_matrix",
    "graph_regularizer_eigen",
    "graph_regularizer_matrix",
    "graph_only_kernel",
    "transductive_kernel",
    "spectral_transductive_kernel",
    "kernel_matrix",
    "kernel_submatrix",
    "label_propagation",
    "JITTER_LADDER",
]

JITTER_LADDER = (1e-8, 1e-6, 1e-4)

# graph Matern: manifold dimension is fixed to 1 on graphs
_MATERN_DIM = 1


class Base(str, enum.Enum):
    NONE = "none"
    RBF = "rbf"
    MATERN12 = "matern12"


class Regularizer(str, enum.Enum):
    NONE = "none"
    REGULARIZED_LAPLACIAN = "regularized_laplacian"
    DIFFUSION = "diffusion"
    PSTEP_RANDOM_WALK = "pstep_random_walk"
    COSINE = "cosine"
    GRAPH_MATERN = "graph_matern"
    SOFTPLUS_POLYNOMIAL = "softplus_polynomial"


class Mode(str, enum.Enum):
    FEATURE_ONLY = "feature_only"
    GRAPH_ONLY = "graph_only"
    TRANSDUCTIVE = "transductive"


@dataclass(frozen=True)
class KernelSpec:
    """Which base kernel and graph regularizer to use, and how to combine them.

    ``degree`` is only read for the softplus-polynomial regularizer.
    """

    base: Base = Base.RBF
    regularizer: Regularizer = Regularizer.SOFTPLUS_POLYNOMIAL
    mode: Mode = Mode.TRANSDUCTIVE
    degree: int = 4

    def __post_init__(self):
        object.__setattr__(self, "base", Base(self.base))
        object.__setattr__(self, "regularizer", Regularizer(self.regularizer))
        object.__setattr__(self, "mode", Mode(self.mode))
        has_base = self.base is not Base.NONE
        has_reg = self.regularizer is not Regularizer.NONE
        ok = {
            Mode.FEATURE_ONLY: has_base and not has_reg,
            Mode.GRAPH_ONLY: has_reg and not has_base,
            Mode.TRANSDUCTIVE: has_base and has_reg,
        }[self.mode]
        if not ok:
            raise ParameterError(
                f"inconsistent kernel spec: mode={self.mode.value}, base={self.base.value}, "
                f"regularizer={self.regularizer.value}"
            )
        if not isinstance(self.degree, (int, np.integer)) or self.degree < 0:
            raise ParameterError(f"polynomial degree must be a nonnegative integer, got {self.degree!r}")

    @classmethod
    def feature_only(cls, base="rbf"):
        return cls(base=base, regularizer=Regularizer.NONE, mode=Mode.FEATURE_ONLY)

    @classmethod
    def graph_only(cls, regularizer="regularized_laplacian", degree=4):
        return cls(base=Base.NONE, regularizer=regularizer, mode=Mode.GRAPH_ONLY, degree=degree)

    @classmethod
    def transductive(cls, base="rbf", regularizer="softplus_polynomial", degree=4):
        return cls(base=base, regularizer=regularizer, mode=Mode.TRANSDUCTIVE, degree=degree)

    @property
    def uses_base(self):
        return self.base is not Base.NONE

    @property
    def uses_graph(self):
        return self.regularizer is not Regularizer.NONE


@dataclass(frozen=True)
class HyperParams:
    """Kernel and likelihood hyperparameters.

    Not every field is read by every :class:`KernelSpec`: ``alpha`` serves the
    regularized Laplacian and p-step random walk, ``sigma_diff`` the diffusion
    regularizer (rate ``sigma_diff**2 / 2``), ``nu``/``kappa`` the graph Matern.
    """

    sigma1_sq: float = 1.0
    lengthscale: float = 1.0
    sigma2_sq: float = 1.0
    betas: tuple = (0.0,)
    noise_sq: float = 0.1
    alpha: float = 1.0
    sigma_diff: float = 1.0
    p_steps: int = 2
    nu: float = 1.5
    kappa: float = 1.0
    # unconstrained coordinates this instance was unpacked from, if any
    coords: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in np.atleast_1d(self.betas)))
        for name in ("sigma1_sq", "lengthscale", "sigma2_sq", "noise_sq", "alpha", "nu", "kappa"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
        if not (np.isfinite(self.sigma_diff) and self.sigma_diff >= 0):
            raise ParameterError(f"sigma_diff must be finite and >= 0, got {self.sigma_diff!r}")
        if int(self.p_steps) != self.p_steps or self.p_steps < 1:
            raise ParameterError(f"p_steps must be a positive integer, got {self.p_steps!r}")

    def replace(self, **changes):
        changes.setdefault("coords", None)
        return replace(self, **changes)


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    return np.logaddexp(0.0, x)


def base_kernel_matrix(spec, hp, Xa, Xb=None):
    """Feature-space Gram matrix between the rows of ``Xa`` and ``Xb``.

    RBF is ``s1 * exp(-|x - x'|^2 / 2 l^2)``, Matern-1/2 is
    ``s1 * exp(-|x - x'| / l)``.
    """
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    Xb = Xa if Xb is None else np.atleast_2d(np.asarray(Xb, dtype=float))
    if Xa.shape[1] != Xb.shape[1]:
        raise ParameterError(f"feature dimensions differ: {Xa.shape[1]} vs {Xb.shape[1]}")
    if spec.base is Base.RBF:
        d2 = cdist(Xa, Xb, "sqeuclidean")
        return hp.sigma1_sq * np.exp(-0.5 * d2 / hp.lengthscale**2)
    if spec.base is Base.MATERN12:
        d = cdist(Xa, Xb)
        return hp.sigma1_sq * np.exp(-d / hp.lengthscale)
    raise ParameterError("kernel spec has no base kernel")


def graph_regularizer_eigen(spec, hp, eigenvalues):
    """Spectral regularizer ``r(lam) / sigma2_sq``, one value per eigenvalue."""
    lam = np.asarray(eigenvalues, dtype=float)
    reg = spec.regularizer
    if reg is Regularizer.REGULARIZED_LAPLACIAN:
        r = 1.0 + hp.alpha * lam
    elif reg is Regularizer.DIFFUSION:
        r = np.exp(0.5 * hp.sigma_diff**2 * lam)
    elif reg is Regularizer.PSTEP_RANDOM_WALK:
        if hp.alpha <= 2.0:
            raise ParameterError(f"p-step random walk needs alpha > 2 (got {hp.alpha}); alpha - lam would vanish")
        r = (hp.alpha - lam) ** (-float(hp.p_steps))
    elif reg is Regularizer.COSINE:
        r = 1.0 / np.cos(lam * np.pi / 4.0)
    elif reg is Regularizer.GRAPH_MATERN:
        r = (2.0 * hp.nu / hp.kappa**2 + lam) ** (hp.nu / 2.0 + _MATERN_DIM / 4.0)
    elif reg is Regularizer.SOFTPLUS_POLYNOMIAL:
        betas = np.asarray(hp.betas, dtype=float)
        if betas.size != spec.degree + 1:
            raise ParameterError(f"expected {spec.degree + 1} polynomial coefficients, got {betas.size}")
        r = softplus(np.polynomial.polynomial.polyval(lam, betas))
    else:
        raise ParameterError("kernel spec has no graph regularizer")
    r = r / hp.sigma2_sq
    if not np.all(np.isfinite(r) & (r > 0)):
        raise InvariantViolation(f"graph regularizer must be finite and positive (min {np.min(r):.3e})")
    return r


def graph_regularizer_matrix(spec, hp, sd):
    """``U diag(r(lam)) U.T``."""
    U = sd.eigenvectors
    R = (U * graph_regularizer_eigen(spec, hp, sd.eigenvalues)) @ U.T
    return 0.5 * (R + R.T)


def graph_only_kernel(spec, hp, sd):
    """Kernel from connectivity alone: the spectral inverse ``U diag(1/r) U.T``."""
    U = sd.eigenvectors
    K = (U / graph_regularizer_eigen(spec, hp, sd.eigenvalues)) @ U.T
    return 0.5 * (K + K.T)


def transductive_kernel(K1, R2):
    """Combine a full-node base Gram ``K1`` with a graph regularizer ``R2``.

    Returns ``K1 - K1 (I + R2 K1)^-1 R2 K1``, symmetrized. Jitter from
    :data:`JITTER_LADDER` is added to ``I + R2 K1`` only when the plain solve
    fails.
    """
    K1 = np.asarray(K1, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    if K1.shape != R2.shape or K1.ndim != 2 or K1.shape[0] != K1.shape[1]:
        raise ParameterError(f"K1 and R2 must be square and equal-shaped, got {K1.shape} and {R2.shape}")
    n = K1.shape[0]
    R2K1 = R2 @ K1
    system = np.eye(n) + R2K1
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            correction = np.linalg.solve(system + jitter * np.eye(n), R2K1)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(correction)):
            break
    else:
        raise ConditioningError("I + R2 K1 could not be solved", np.linalg.cond(system))
    K = K1 - K1 @ correction
    return 0.5 * (K + K.T)


def spectral_transductive_kernel(K1, sd, r):
    """Transductive kernel from the regularizer spectrum ``r``.

    Evaluates ``K1 - K1 U (diag(1/r) + U^T K1 U)^-1 U^T K1``, which equals
    :func:`transductive_kernel` with ``R2 = U diag(r) U^T`` but touches ``r``
    only through ``1/r``, so strongly penalized eigenvectors (huge ``r``)
    cannot swamp the solve.
    """
    K1 = np.asarray(K1, dtype=float)
    r = np.asarray(r, dtype=float)
    U = sd.eigenvectors
    C = U.T @ K1
    M = C @ U
    M = 0.5 * (M + M.T)
    M[np.diag_indices_from(M)] += 1.0 / r
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            L = sla.cholesky(M + jitter * np.eye(M.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise ConditioningError("diag(1/r) + U^T K1 U is not positive definite", np.linalg.cond(M))
    V = sla.solve_triangular(L, C, lower=True)
    K = K1 - V.T @ V
    return 0.5 * (K + K.T)


def kernel_matrix(spec, hp, X=None, sd=None):
    """Full n x n kernel over all nodes for any :class:`KernelSpec` mode."""
    if spec.mode is Mode.FEATURE_ONLY:
        return base_kernel_matrix(spec, hp, X)
    if spec.mode is Mode.GRAPH_ONLY:
        return graph_only_kernel(spec, hp, sd)
    K1 = base_kernel_matrix(spec, hp, X)
    if K1.shape[0] != sd.n:
        raise ParameterError(f"{K1.shape[0]} feature rows but {sd.n} graph nodes")
    return spectral_transductive_kernel(K1, sd, graph_regularizer_eigen(spec, hp, sd.eigenvalues))


def kernel_submatrix(K, rows, cols):
    """Block ``K[rows][:, cols]`` in the given index order."""
    K = np.asarray(K)
    rows = np.asarray(rows, dtype=int).ravel()
    cols = np.asarray(cols, dtype=int).ravel()
    for name, idx, size in (("row", rows, K.shape[0]), ("column", cols, K.shape[1])):
        if idx.size and (idx.min() < 0 or idx.max() >= size):
            raise ParameterError(f"{name} index out of range [0, {size})")
    return K[np.ix_(rows, cols)]


def label_propagation(sd, alpha, y_train):
    """Label-propagation scores ``(1 - alpha) (I + alpha L)^-1 Y``.

    This is the graph-only kernel of the regularizer
    ``(I + alpha L) / (1 - alpha)`` applied to the partial one-hot labels.
    Predicted classes are the row argmax.
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    Y = np.asarray(y_train, dtype=float)
    U = sd.eigenvectors
    filt = (1.0 - alpha) / (1.0 + alpha * sd.eigenvalues)
    scores = U @ (filt[:, None] * (U.T @ Y.reshape(sd.n, -1)))
    return scores.reshape(Y.shape)
