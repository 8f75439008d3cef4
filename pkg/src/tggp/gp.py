"""Exact GP regression on a precomputed kernel matrix."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import ConditioningError, InvariantViolation, ParameterError
from .kernels import JITTER_LADDER

__all__ = [
    "GPPosterior",
    "jittered_cholesky",
    "log_marginal_likelihood",
    "posterior",
    "classify",
    "one_hot",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Marginal posterior at the test nodes.

    ``mean`` has one column per output channel; ``variance`` is shared by all
    channels because they share a kernel.
    """

    mean: np.ndarray
    variance: np.ndarray
    lml: float


def jittered_cholesky(A):
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Returns
    -------
    L : ndarray
    jitter : float
        The jitter that was finally added (0.0 if none).
    """
    A = np.asarray(A, dtype=float)
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            Aj = A + jitter * np.eye(A.shape[0]) if jitter else A
            return sla.cholesky(Aj, lower=True, check_finite=True), jitter
        except (np.linalg.LinAlgError, ValueError):
            continue
    cond = np.linalg.cond(A) if np.all(np.isfinite(A)) else float("inf")
    raise ConditioningError("matrix is not positive definite even with jitter 1e-4", cond)


def _as_columns(Y):
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def log_marginal_likelihood(K_train, Y, noise_sq):
    """Sum over output channels of the Gaussian log evidence.

    Each column ``y`` of ``Y`` contributes
    ``-y^T C^-1 y / 2 - log|C| / 2 - s log(2 pi) / 2`` with
    ``C = K_train + noise_sq I``.
    """
    K_train = np.asarray(K_train, dtype=float)
    Y = _as_columns(Y)
    s = K_train.shape[0]
    if s < 1 or Y.shape[0] != s:
        raise ParameterError(f"need at least one training point and matching targets, got K {K_train.shape}, Y {Y.shape}")
    L, _ = jittered_cholesky(K_train + noise_sq * np.eye(s))
    alpha = sla.cho_solve((L, True), Y)
    c = Y.shape[1]
    quad = np.sum(Y * alpha)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * quad - 0.5 * c * logdet - 0.5 * c * s * _LOG_2PI)


def posterior(K_full, train_idx, test_idx, Y_train, noise_sq):
    """Posterior mean and marginal variance at ``test_idx`` under a zero prior mean."""
    K_full = np.asarray(K_full, dtype=float)
    train_idx = np.asarray(train_idx, dtype=int).ravel()
    test_idx = np.asarray(test_idx, dtype=int).ravel()
    if train_idx.size == 0:
        raise ParameterError("posterior needs at least one training node")
    if np.intersect1d(train_idx, test_idx).size:
        raise ParameterError("training and test index sets overlap")
    Y = _as_columns(Y_train)
    K_tt = K_full[np.ix_(train_idx, train_idx)]
    K_st = K_full[np.ix_(test_idx, train_idx)]
    s = train_idx.size
    L, _ = jittered_cholesky(K_tt + noise_sq * np.eye(s))
    alpha = sla.cho_solve((L, True), Y)
    mean = K_st @ alpha
    V = sla.solve_triangular(L, K_st.T, lower=True)
    var = K_full[test_idx, test_idx] - np.sum(V**2, axis=0)
    if var.size and var.min() < -1e-8:
        raise InvariantViolation(f"negative posterior variance {var.min():.3e}")
    var = np.maximum(var, 0.0)
    quad = np.sum(Y * alpha)
    c = Y.shape[1]
    lml = -0.5 * quad - c * np.sum(np.log(np.diag(L))) - 0.5 * c * s * _LOG_2PI
    return GPPosterior(mean=mean, variance=var, lml=float(lml))


def classify(scores):
    """Row-wise argmax; ties go to the lowest class index."""
    scores = np.atleast_2d(np.asarray(scores))
    return np.argmax(scores, axis=1)


def one_hot(y, c):
    """``(s, c)`` indicator matrix for integer labels in ``[0, c)``."""
    y = np.asarray(y)
    if y.size and (not np.all(np.equal(np.mod(y, 1), 0)) or y.min() < 0 or y.max() >= c):
        raise ParameterError(f"labels must be integers in [0, {c})")
    Y = np.zeros((y.size, c))
    Y[np.arange(y.size), y.astype(int)] = 1.0
    return Y
