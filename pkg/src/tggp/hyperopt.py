"""Type-II maximum likelihood for the kernel hyperparameters.

Positive quantities are optimized in log space, polynomial coefficients in
raw space. Gradients are central finite differences and the ascent is an
Adam-style update with accept/reject step control, so accepted steps never
lower the objective.
"""

import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import pdist

from .data import Task
from .exceptions import (
    ConditioningError,
    InvariantViolation,
    OptimizationError,
    ParameterError,
)
from .gp import jittered_cholesky, log_marginal_likelihood, one_hot
from .kernels import (
    HyperParams,
    Mode,
    Regularizer,
    base_kernel_matrix,
    graph_regularizer_eigen,
)

__all__ = [
    "ParamVector",
    "OptConfig",
    "OptResult",
    "param_names",
    "pack",
    "unpack",
    "training_targets",
    "MarginalLikelihood",
    "objective",
    "numerical_gradient",
    "default_init",
    "optimize",
]

logger = logging.getLogger(__name__)

# largest exponent allowed in a starting point's regularizer
_MAX_EXPONENT = 50.0

_NUMERICAL_FAILURES = (ConditioningError, InvariantViolation, np.linalg.LinAlgError, FloatingPointError)

# name -> (HyperParams field, to-unconstrained, from-unconstrained)
_TRANSFORMS = {
    "log_sigma1_sq": ("sigma1_sq", np.log, np.exp),
    "log_lengthscale": ("lengthscale", np.log, np.exp),
    "log_sigma2_sq": ("sigma2_sq", np.log, np.exp),
    "log_alpha": ("alpha", np.log, np.exp),
    "log_alpha_minus_2": ("alpha", lambda a: np.log(a - 2.0), lambda x: 2.0 + np.exp(x)),
    "log_sigma_diff": ("sigma_diff", np.log, np.exp),
    "log_nu": ("nu", np.log, np.exp),
    "log_kappa": ("kappa", np.log, np.exp),
    "log_noise_sq": ("noise_sq", np.log, np.exp),
}

_REGULARIZER_PARAMS = {
    Regularizer.REGULARIZED_LAPLACIAN: ("log_alpha",),
    Regularizer.DIFFUSION: ("log_sigma_diff",),
    Regularizer.PSTEP_RANDOM_WALK: ("log_alpha_minus_2",),
    Regularizer.COSINE: (),
    Regularizer.GRAPH_MATERN: ("log_nu", "log_kappa"),
}


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat unconstrained parameter vector with its name layout."""

    values: np.ndarray
    names: tuple

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != len(self.names):
            raise ParameterError(f"{v.size} values for {len(self.names)} names")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def layout(self):
        return {name: i for i, name in enumerate(self.names)}

    def __getitem__(self, name):
        return self.values[self.layout[name]]

    def with_values(self, values):
        return ParamVector(values, self.names)


def param_names(spec):
    """Ordered names of the free parameters for ``spec``."""
    names = []
    if spec.uses_base:
        names += ["log_sigma1_sq", "log_lengthscale"]
    if spec.uses_graph:
        names.append("log_sigma2_sq")
        if spec.regularizer is Regularizer.SOFTPLUS_POLYNOMIAL:
            names += [f"beta_{i}" for i in range(spec.degree + 1)]
        else:
            names += list(_REGULARIZER_PARAMS[spec.regularizer])
    names.append("log_noise_sq")
    return tuple(names)


def pack(spec, hp):
    """Unconstrained coordinates of ``hp`` for ``spec``."""
    names = param_names(spec)
    if hp.coords is not None and hp.coords[0] == names:
        return ParamVector(np.array(hp.coords[1]), names)
    values = []
    for name in names:
        if name.startswith("beta_"):
            i = int(name[5:])
            values.append(hp.betas[i] if i < len(hp.betas) else 0.0)
        else:
            attr, fwd, _ = _TRANSFORMS[name]
            values.append(fwd(getattr(hp, attr)))
    return ParamVector(np.array(values, dtype=float), names)


def unpack(pv, template=None):
    """:class:`HyperParams` from ``pv``; fields not in ``pv`` come from ``template``."""
    template = HyperParams() if template is None else template
    changes = {}
    betas = []
    for name, x in zip(pv.names, pv.values):
        if name.startswith("beta_"):
            betas.append(float(x))
        else:
            attr, _, inv = _TRANSFORMS[name]
            changes[attr] = float(inv(x))
    if betas:
        changes["betas"] = tuple(betas)
    changes["coords"] = (pv.names, tuple(float(x) for x in pv.values))
    return template.replace(**changes)


def training_targets(dataset, idx):
    """Regression values or one-hot class indicators at ``idx``."""
    y = dataset.y[np.asarray(idx, dtype=int)]
    if dataset.task is Task.CLASSIFICATION:
        return one_hot(y, dataset.class_count)
    return y[:, None].astype(float)


class MarginalLikelihood:
    """Training log evidence of a kernel spec as a function of a ParamVector.

    The transductive training block is formed through the spectral form of
    the Woodbury identity,
    ``K_tt = K1_tt - K1_t. U (diag(1/r) + U^T K1 U)^-1 U^T K1_.t``,
    so a change of graph parameters costs a single n x n Cholesky, while the
    lengthscale-dependent projections ``U^T K1 U`` are cached.

    Parameters
    ----------
    spec : KernelSpec
    X : ndarray of shape (n, m)
        Features of *all* nodes.
    sd : SpectralDecomposition or None
        Laplacian spectrum of the full graph (unused for feature-only specs).
    train_idx : array of int
    Y : ndarray of shape (s, c)
        Training targets.
    template : HyperParams, optional
        Supplies fields that are not optimized (e.g. ``p_steps``).
    """

    def __init__(self, spec, X, sd, train_idx, Y, template=None, cache_size=4):
        self.spec = spec
        self.X = np.asarray(X, dtype=float)
        self.sd = sd
        self.train_idx = np.asarray(train_idx, dtype=int)
        self.Y = np.asarray(Y, dtype=float).reshape(self.train_idx.size, -1)
        self.template = HyperParams() if template is None else template
        self.names = param_names(spec)
        self.n_evals = 0
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self._last_block = None
        if spec.uses_graph:
            self._U_train = sd.eigenvectors[self.train_idx]

    def _projections(self, lengthscale):
        key = float(lengthscale)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        unit = self.template.replace(sigma1_sq=1.0, lengthscale=key)
        U = self.sd.eigenvectors
        K1u = base_kernel_matrix(self.spec, unit, self.X)
        C = U.T @ K1u
        G = C @ U
        entry = (K1u[np.ix_(self.train_idx, self.train_idx)], C[:, self.train_idx], 0.5 * (G + G.T))
        self._cache[key] = entry
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return entry

    def train_kernel(self, hp):
        """Training block of the full-node kernel for ``hp``."""
        spec = self.spec
        if spec.mode is Mode.FEATURE_ONLY:
            Xt = self.X[self.train_idx]
            return base_kernel_matrix(spec, hp, Xt)
        r = graph_regularizer_eigen(spec, hp, self.sd.eigenvalues)
        if spec.mode is Mode.GRAPH_ONLY:
            Ut = self._U_train
            K = (Ut / r) @ Ut.T
            return 0.5 * (K + K.T)
        K1u_tt, C_t, G = self._projections(hp.lengthscale)
        s1 = hp.sigma1_sq
        M = s1 * G
        M[np.diag_indices_from(M)] += 1.0 / r
        L, _ = jittered_cholesky(M)
        V = sla.solve_triangular(L, C_t, lower=True)
        K = s1 * K1u_tt - s1**2 * (V.T @ V)
        return 0.5 * (K + K.T)

    def hyperparams(self, values):
        return unpack(ParamVector(values, self.names), self.template)

    def evaluate(self, hp):
        # the kernel block does not depend on the noise variance
        key = hp.replace(noise_sq=1.0)
        if self._last_block is not None and self._last_block[0] == key:
            K = self._last_block[1]
        else:
            K = self.train_kernel(hp)
            self._last_block = (key, K)
        return log_marginal_likelihood(K, self.Y, hp.noise_sq)

    def __call__(self, values):
        """Log evidence at ``values``; numerical failures give ``-inf``."""
        self.n_evals += 1
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                hp = self.hyperparams(values)
                value = self.evaluate(hp)
        except _NUMERICAL_FAILURES + (ParameterError,):
            return -np.inf
        return value if np.isfinite(value) else -np.inf


def objective(pv, spec, dataset, train_idx, template=None):
    """Training log marginal likelihood of the kernel described by ``pv``."""
    sd = dataset.spectrum if spec.uses_graph else None
    f = MarginalLikelihood(spec, dataset.X, sd, train_idx, training_targets(dataset, train_idx), template)
    if tuple(pv.names) != f.names:
        raise ParameterError(f"parameter layout {pv.names} does not match spec layout {f.names}")
    return f(pv.values)


def numerical_gradient(f, x, h=1e-5, return_flags=False):
    """Central-difference gradient of ``f`` at ``x``.

    Coordinates whose neighbouring evaluations are not finite get gradient 0;
    with ``return_flags`` a boolean mask of those coordinates is returned too.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    bad = np.zeros(x.shape, dtype=bool)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = f(x + e), f(x - e)
        if np.isfinite(fp) and np.isfinite(fm):
            grad[i] = (fp - fm) / (2.0 * h)
        else:
            bad[i] = True
    if bad.any() and not return_flags:
        warnings.warn(f"non-finite objective next to coordinates {np.nonzero(bad)[0].tolist()}; gradient zeroed there",
                      RuntimeWarning, stacklevel=2)
    return (grad, bad) if return_flags else grad


@dataclass
class OptConfig:
    """Optimizer settings.

    ``step_rule`` is ``"adam"`` (per-coordinate moving-average scaling). The
    step size grows by ``grow`` after an accepted step and shrinks by
    ``shrink`` after a rejected one; a restart stops once the step size is
    below ``min_step`` or the objective gained less than ``ftol`` over the
    last ``patience`` iterations.
    """

    restarts: int = 2
    max_iters: int = 200
    seed: int = 0
    step_rule: str = "adam"
    step_size: float = 0.1
    grow: float = 1.5
    shrink: float = 0.5
    min_step: float = 1e-4
    max_step: float = 2.0
    ftol: float = 1e-6
    patience: int = 20
    fd_step: float = 1e-5
    # clip log-space coordinates to keep exp() finite
    bound: float = 12.0


@dataclass
class OptResult:
    """Outcome of :func:`optimize`."""

    best_params: ParamVector
    best_lml: float
    trace: list
    restarts_run: int
    best_restart: int = 0
    traces: list = field(default_factory=list)
    initial_lml: list = field(default_factory=list)


def _median_distance(X, seed, max_points=2000):
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_points:
        X = X[np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False)]
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def _spectral_scale(dataset):
    """Inverse of the smallest nonzero Laplacian eigenvalue (1.0 if none)."""
    lam = dataset.spectrum.eigenvalues
    nz = lam[lam > 1e-8]
    return float(1.0 / nz[0]) if nz.size else 1.0


def default_init(spec, dataset, seed=0, restart=0):
    """Starting point for restart ``restart``.

    Restart 0 uses fixed defaults (unit variances, noise 0.1, median-distance
    lengthscale, zero polynomial, unit regularizer scalars). Restart 1 puts
    the graph regularizer at the spectral scale ``1 / lam_2`` instead, so
    that smoothing reaches across the whole graph, and picks ``sigma2_sq``
    so the graph kernel has unit average prior variance. Later restarts alternate
    between those two centres and perturb every log-space entry by
    ``U(-1, 1)`` noise drawn from ``(seed, restart)``.
    """
    alpha = 2.5 if spec.regularizer is Regularizer.PSTEP_RANDOM_WALK else 1.0
    hp = HyperParams(
        sigma1_sq=1.0,
        lengthscale=_median_distance(dataset.X, seed) if spec.uses_base else 1.0,
        sigma2_sq=1.0,
        betas=(0.0,) * (spec.degree + 1),
        noise_sq=0.1,
        alpha=alpha,
        sigma_diff=1.0,
        nu=1.5,
        kappa=1.0,
    )
    if restart % 2 == 1 and spec.uses_graph:
        scale = _spectral_scale(dataset)
        reg = spec.regularizer
        if reg is Regularizer.REGULARIZED_LAPLACIAN:
            hp = hp.replace(alpha=scale)
        elif reg is Regularizer.DIFFUSION:
            # keep exp(sigma^2 lam / 2) finite across the spectrum
            lam_max = max(float(dataset.spectrum.eigenvalues[-1]), 1e-12)
            hp = hp.replace(sigma_diff=float(np.sqrt(min(2.0 * scale, 2.0 * _MAX_EXPONENT / lam_max))))
        elif reg is Regularizer.GRAPH_MATERN:
            hp = hp.replace(kappa=float(np.sqrt(2.0 * hp.nu * scale)))
        elif reg is Regularizer.SOFTPLUS_POLYNOMIAL and spec.degree >= 1:
            hp = hp.replace(betas=(0.0, scale) + (0.0,) * (spec.degree - 1))
        # unit average prior variance of the graph kernel U diag(1/r) U^T
        try:
            r = graph_regularizer_eigen(spec, hp.replace(sigma2_sq=1.0), dataset.spectrum.eigenvalues)
            hp = hp.replace(sigma2_sq=float(dataset.n / np.sum(1.0 / r)))
        except (InvariantViolation, ParameterError, FloatingPointError):
            logger.debug("spectral-scale start not representable; keeping sigma2_sq = 1")
    pv = pack(spec, hp)
    if restart > 1:
        rng = np.random.default_rng([seed, restart])
        noise = rng.uniform(-1.0, 1.0, size=pv.values.size)
        is_log = np.array([name.startswith("log_") for name in pv.names])
        pv = pv.with_values(pv.values + noise * is_log)
    return pv


def _ascend(f, x0, cfg, bounded=None):
    x = np.array(x0, dtype=float)
    lo = np.where(bounded, -cfg.bound, -np.inf) if bounded is not None else -cfg.bound
    hi = -lo
    fx = f(x)
    trace = [(0, fx)]
    if not np.isfinite(fx):
        return x, fx, trace
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = cfg.step_size
    grad = None
    t = 0
    for it in range(1, cfg.max_iters + 1):
        if grad is None:
            grad, _ = numerical_gradient(f, x, cfg.fd_step, return_flags=True)
            if not np.any(grad):
                break
            t += 1
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad**2
            direction = (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        x_new = np.clip(x + step * direction, lo, hi)
        f_new = f(x_new)
        if np.isfinite(f_new) and f_new >= fx:
            x, fx = x_new, f_new
            grad = None
            step = min(step * cfg.grow, cfg.max_step)
        else:
            step *= cfg.shrink
            # stale momentum need not point uphill; the scaled gradient does
            m = (1 - b1**t) * grad
            direction = grad / (np.sqrt(v / (1 - b2**t)) + eps)
        trace.append((it, fx))
        if step < cfg.min_step:
            break
        if it >= cfg.patience and fx - trace[-cfg.patience - 1][1] < cfg.ftol:
            break
    return x, fx, trace


def optimize(spec, dataset, train_idx, config=None, template=None):
    """Maximize the training log marginal likelihood over ``config.restarts`` starts.

    Returns the best restart (ties go to the lower restart index). Raises
    :class:`OptimizationError` if no restart reaches a finite objective.
    """
    cfg = OptConfig() if config is None else config
    if cfg.restarts < 1:
        raise ParameterError("restarts must be >= 1")
    if cfg.step_rule != "adam":
        raise ParameterError(f"unknown step rule {cfg.step_rule!r}")
    sd = dataset.spectrum if spec.uses_graph else None
    f = MarginalLikelihood(spec, dataset.X, sd, train_idx, training_targets(dataset, train_idx), template)
    # only log-space coordinates are clipped; polynomial coefficients are free
    bounded = np.array([n.startswith("log_") for n in f.names])
    best = None
    traces, initial = [], []
    for r in range(cfg.restarts):
        x0 = default_init(spec, dataset, cfg.seed, restart=r)
        x, fx, trace = _ascend(f, x0.values, cfg, bounded)
        traces.append(trace)
        initial.append(trace[0][1])
        logger.debug("restart %d: lml %.6g -> %.6g in %d iterations", r, trace[0][1], fx, len(trace) - 1)
        if np.isfinite(fx) and (best is None or fx > best[1]):
            best = (x, fx, r)
    if best is None:
        raise OptimizationError("every restart diverged", traces)
    x, fx, r = best
    return OptResult(
        best_params=ParamVector(x, f.names),
        best_lml=float(fx),
        trace=traces[r],
        restarts_run=cfg.restarts,
        best_restart=r,
        traces=traces,
        initial_lml=initial,
    )
