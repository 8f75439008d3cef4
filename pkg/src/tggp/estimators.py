"""scikit-learn style estimators around the transductive GP.

All nodes (labeled or not) are passed to ``fit``; unlabeled nodes are marked
with ``NaN`` (regression) or ``-1`` (classification), as in
:mod:`sklearn.semi_supervised`. Because the kernel between any two nodes
depends on every node, predictions are only defined for the fitted node set.

>>> from tggp.estimators import TransductiveGPRegressor
>>> model = TransductiveGPRegressor(kernel="tggp", regularizer="regularized_laplacian")
>>> model.fit(X, y_partial)                # doctest: +SKIP
>>> y_hat = model.predict(X)               # doctest: +SKIP
"""

from numbers import Integral

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils._param_validation import Interval, StrOptions
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, Task
from .gp import classify, posterior
from .graph import Graph, build_knn_graph, symmetrize_adjacency
from .hyperopt import OptConfig, optimize, training_targets, unpack
from .kernels import Base, HyperParams, KernelSpec, Regularizer, kernel_matrix

__all__ = ["TransductiveGPRegressor", "TransductiveGPClassifier", "make_kernel_spec"]

KERNEL_NAMES = ("gp", "graph_only", "tggp")


def make_kernel_spec(kernel="tggp", base="rbf", regularizer="softplus_polynomial", degree=4):
    """:class:`KernelSpec` for a model name: ``gp``, ``graph_only`` or ``tggp``."""
    if kernel == "gp":
        return KernelSpec.feature_only(base)
    if kernel == "graph_only":
        return KernelSpec.graph_only(regularizer, degree)
    if kernel == "tggp":
        return KernelSpec.transductive(base, regularizer, degree)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNEL_NAMES}")


class _TransductiveGP(BaseEstimator):
    _parameter_constraints = {
        "kernel": [StrOptions(set(KERNEL_NAMES))],
        "base": [StrOptions({b.value for b in Base if b is not Base.NONE})],
        "regularizer": [StrOptions({r.value for r in Regularizer if r is not Regularizer.NONE})],
        "degree": [Interval(Integral, 0, None, closed="left")],
        "p_steps": [Interval(Integral, 1, None, closed="left")],
        "n_neighbors": [Interval(Integral, 1, None, closed="left")],
        "restarts": [Interval(Integral, 1, None, closed="left")],
        "max_iters": [Interval(Integral, 0, None, closed="left")],
        "standardize": ["boolean"],
        "random_state": [Interval(Integral, 0, None, closed="left")],
        "optimizer_options": [dict, None],
    }

    def __init__(
        self,
        kernel="tggp",
        base="rbf",
        regularizer="softplus_polynomial",
        degree=4,
        p_steps=2,
        n_neighbors=4,
        restarts=2,
        max_iters=200,
        standardize=True,
        random_state=0,
        optimizer_options=None,
    ):
        self.kernel = kernel
        self.base = base
        self.regularizer = regularizer
        self.degree = degree
        self.p_steps = p_steps
        self.n_neighbors = n_neighbors
        self.restarts = restarts
        self.max_iters = max_iters
        self.standardize = standardize
        self.random_state = random_state
        self.optimizer_options = optimizer_options

    def _graph(self, X, adjacency):
        if adjacency is None:
            return build_knn_graph(X, self.n_neighbors)
        A = check_array(adjacency, ensure_all_finite=True)
        if A.shape != (X.shape[0], X.shape[0]):
            raise ValueError(f"adjacency must be {X.shape[0]}x{X.shape[0]}, got {A.shape}")
        return Graph(A if np.array_equal(A, A.T) else symmetrize_adjacency(A))

    def _fit_targets(self, X, targets, labeled, adjacency, task, class_count):
        self._validate_params()
        X = check_array(X, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        self.X_fit_ = X
        if self.standardize:
            mu, sd = X.mean(axis=0), X.std(axis=0)
            Xs = (X - mu) / np.where(sd > 0, sd, 1.0)
        else:
            Xs = X
        train = np.flatnonzero(labeled)
        if train.size == 0:
            raise ValueError("at least one node must be labeled")
        self.graph_ = self._graph(X, adjacency)
        y_store = np.where(labeled, targets, 0)
        ds = Dataset(
            X=Xs,
            y=y_store,
            graph=self.graph_,
            splits={"train": train, "validation": (), "test": np.flatnonzero(~labeled)},
            task=task,
            class_count=class_count,
        )
        self.dataset_ = ds
        self.kernel_spec_ = make_kernel_spec(self.kernel, self.base, self.regularizer, self.degree)
        template = HyperParams(p_steps=self.p_steps)
        cfg = OptConfig(restarts=self.restarts, max_iters=self.max_iters, seed=self.random_state,
                        **(self.optimizer_options or {}))
        self.opt_result_ = optimize(self.kernel_spec_, ds, train, cfg, template)
        self.hyperparams_ = unpack(self.opt_result_.best_params, template)
        self.lml_ = self.opt_result_.best_lml
        sd = ds.spectrum if self.kernel_spec_.uses_graph else None
        self.kernel_matrix_ = kernel_matrix(self.kernel_spec_, self.hyperparams_, ds.X, sd)
        self.train_idx_ = train
        self.unlabeled_idx_ = np.flatnonzero(~labeled)
        if self.unlabeled_idx_.size:
            Y = training_targets(ds, train)
            self.posterior_ = posterior(self.kernel_matrix_, train, self.unlabeled_idx_, Y, self.hyperparams_.noise_sq)
        else:
            self.posterior_ = None
        return self

    @property
    def feature_graph_ratio_(self):
        """Fitted ``sigma1_sq / sigma2_sq``: large means the features dominate."""
        check_is_fitted(self, "hyperparams_")
        return self.hyperparams_.sigma1_sq / self.hyperparams_.sigma2_sq

    def _check_same_nodes(self, X):
        check_is_fitted(self, "hyperparams_")
        if X is None:
            return
        X = check_array(X)
        if X.shape != self.X_fit_.shape or not np.array_equal(X, self.X_fit_):
            raise ValueError("transductive model: predict is only defined on the node set passed to fit")

    def _node_scores(self):
        """Posterior mean for every node (labeled nodes keep their targets)."""
        ds = self.dataset_
        Y = training_targets(ds, np.arange(ds.n))
        scores = np.array(Y, dtype=float)
        if self.posterior_ is not None:
            scores[self.unlabeled_idx_] = self.posterior_.mean
        return scores


class TransductiveGPRegressor(RegressorMixin, _TransductiveGP):
    """GP regression on graph nodes with a feature kernel, a graph kernel, or both.

    Parameters
    ----------
    kernel : {"gp", "graph_only", "tggp"}, default="tggp"
        Feature-only GP, graph-only kernel ``r(L)^-1``, or the transductive
        combination ``(K1^-1 + r(L))^-1``.
    base : {"rbf", "matern12"}, default="rbf"
        Feature kernel (ignored for ``graph_only``).
    regularizer : str, default="softplus_polynomial"
        Spectral graph regularizer (ignored for ``gp``).
    degree : int, default=4
        Degree of the softplus polynomial regularizer.
    p_steps : int, default=2
        Step count of the p-step random walk regularizer.
    n_neighbors : int, default=4
        k of the kNN graph built when ``fit`` gets no adjacency.
    restarts, max_iters : int
        Optimizer budget for the marginal likelihood.
    standardize : bool, default=True
        Standardize feature columns over all nodes before fitting.
    random_state : int, default=0
    optimizer_options : dict or None
        Extra :class:`~tggp.hyperopt.OptConfig` fields.

    Attributes
    ----------
    hyperparams_ : HyperParams
    lml_ : float
        Training log marginal likelihood at ``hyperparams_``.
    kernel_matrix_ : ndarray of shape (n, n)
    transduction_ : ndarray of shape (n,)
        Observed targets at labeled nodes, posterior means elsewhere.
    """

    def fit(self, X, y, adjacency=None):
        """Fit on all nodes; ``NaN`` in ``y`` marks unlabeled nodes."""
        y = np.asarray(y, dtype=float).ravel()
        labeled = ~np.isnan(y)
        y_lab = y[labeled]
        self.y_mean_ = float(y_lab.mean()) if y_lab.size else 0.0
        sd = float(y_lab.std()) if y_lab.size > 1 else 1.0
        self.y_scale_ = sd if sd > 0 else 1.0
        z = np.where(labeled, (y - self.y_mean_) / self.y_scale_, 0.0)
        self._fit_targets(X, z, labeled, adjacency, Task.REGRESSION, 0)
        self.transduction_ = self._node_scores()[:, 0] * self.y_scale_ + self.y_mean_
        std = np.zeros(y.size)
        if self.posterior_ is not None:
            std[self.unlabeled_idx_] = np.sqrt(self.posterior_.variance) * self.y_scale_
        self.std_ = std
        return self

    def predict(self, X=None, return_std=False):
        """Predictions for every fitted node."""
        self._check_same_nodes(X)
        return (self.transduction_, self.std_) if return_std else self.transduction_


class TransductiveGPClassifier(ClassifierMixin, _TransductiveGP):
    """Node classification by multi-output GP regression on one-hot targets.

    Each class gets its own regression output sharing one kernel; the
    predicted class is the arg-max output. Parameters are those of
    :class:`TransductiveGPRegressor`.
    """

    def fit(self, X, y, adjacency=None):
        """Fit on all nodes; ``-1`` in ``y`` marks unlabeled nodes."""
        y = np.asarray(y).ravel()
        labeled = y != -1
        self.classes_ = np.unique(y[labeled])
        if self.classes_.size < 2:
            raise ValueError("need labeled nodes from at least two classes")
        codes = np.zeros(y.size, dtype=int)
        codes[labeled] = np.searchsorted(self.classes_, y[labeled])
        self._fit_targets(X, codes, labeled, adjacency, Task.CLASSIFICATION, self.classes_.size)
        self.transduction_ = self.classes_[classify(self._node_scores())]
        return self

    def decision_function(self, X=None):
        """Per-class regression outputs for every fitted node."""
        self._check_same_nodes(X)
        return self._node_scores()

    def predict(self, X=None):
        self._check_same_nodes(X)
        return self.transduction_
