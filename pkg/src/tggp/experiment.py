"""Config-driven experiments: repeated seeds, sweeps, model comparisons.

A *run* executes one model over the configured seeds. Per seed it builds or
loads the dataset, standardizes the features, picks the split, fits the
kernel hyperparameters on the training labels, predicts the test nodes and
scores them. Errors abort only the seed they occur in and are recorded.
"""

import csv
import hashlib
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import (
    Task,
    generate_swiss_roll,
    load_dataset,
    merge_validation_into_train,
    sample_training_split,
    standardize_features,
)
from .estimators import make_kernel_spec
from .exceptions import (
    ConditioningError,
    ConfigError,
    DataFormatError,
    GenerationError,
    InvariantViolation,
    OptimizationError,
    ParameterError,
)
from .gp import classify, posterior
from .hyperopt import optimize, training_targets, unpack
from .kernels import HyperParams, kernel_matrix, label_propagation

__all__ = [
    "SeedResult",
    "RunReport",
    "SweepTable",
    "ExperimentFailed",
    "prepare_dataset",
    "fit_predict",
    "run_experiment",
    "sweep_train_sizes",
    "compare_models",
    "emit_plot_data",
    "split_hash",
]

logger = logging.getLogger(__name__)

DATA_ERRORS = (DataFormatError, GenerationError, FileNotFoundError)
NUMERICAL_ERRORS = (ConditioningError, InvariantViolation, OptimizationError, np.linalg.LinAlgError)
SEED_ERRORS = DATA_ERRORS + NUMERICAL_ERRORS + (ParameterError,)


class ExperimentFailed(RuntimeError):
    """Every seed of a run failed; ``kind`` is ``"data"`` or ``"numerical"``."""

    def __init__(self, message, kind, report=None):
        super().__init__(message)
        self.kind = kind
        self.report = report


def split_hash(ds):
    """Short digest of the train/validation/test index sets."""
    h = hashlib.sha256()
    for name in ("train", "validation", "test"):
        h.update(name.encode())
        h.update(np.asarray(ds.splits[name], dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def _load_source(cfg):
    if cfg.dataset.path is not None:
        return load_dataset(cfg.dataset.path)
    return None


def prepare_dataset(cfg, seed, source=None, n_train=None):
    """Dataset for one seed: (unstandardized, standardized), both split."""
    if cfg.dataset.path is not None:
        raw = load_dataset(cfg.dataset.path) if source is None else source
    else:
        sr = cfg.dataset.swiss_roll
        raw = generate_swiss_roll(sr.n, sr.k, sr.noise, seed)
    n_train = cfg.train.n_train if n_train is None else n_train
    if n_train is not None:
        raw = sample_training_split(raw, n_train, seed)
    if cfg.train.merge_validation:
        raw = merge_validation_into_train(raw)
    return raw, standardize_features(raw)


def fit_predict(model, ds, opt_config):
    """Fit ``model`` (a ModelConfig) on ``ds.train`` and predict ``ds.test``.

    Returns ``(scores, hyperparams, lml, timing)`` where ``scores`` has one
    row per test node (one column for regression, one per class otherwise).
    """
    timing = {}
    train, test = ds.train, ds.test
    Y = training_targets(ds, train)
    if model.name == "lp":
        t0 = time.perf_counter()
        Y_full = np.zeros((ds.n, Y.shape[1]))
        Y_full[train] = Y
        scores = label_propagation(ds.spectrum, model.lp_alpha, Y_full)
        if ds.task is Task.REGRESSION:
            # normalize by the propagated label mass so values keep their scale
            mass = np.zeros((ds.n, 1))
            mass[train] = 1.0
            scores = scores / np.maximum(label_propagation(ds.spectrum, model.lp_alpha, mass), 1e-300)
        timing["predict"] = time.perf_counter() - t0
        return scores[test], None, None, timing

    spec = make_kernel_spec(model.name, model.base, model.regularizer, model.degree)
    template = HyperParams(p_steps=model.p_steps)
    t0 = time.perf_counter()
    result = optimize(spec, ds, train, opt_config, template)
    timing["optimize"] = time.perf_counter() - t0
    hp = unpack(result.best_params, template)
    t0 = time.perf_counter()
    K = kernel_matrix(spec, hp, ds.X, ds.spectrum if spec.uses_graph else None)
    post = posterior(K, train, test, Y, hp.noise_sq)
    timing["predict"] = time.perf_counter() - t0
    return post.mean, hp, result.best_lml, timing


def _fitted_params(model, hp, lml):
    if hp is None:
        return {"lp_alpha": model.lp_alpha}
    out = {"noise_sq": hp.noise_sq, "lml": lml}
    if model.name in ("gp", "tggp"):
        out.update(sigma1_sq=hp.sigma1_sq, lengthscale=hp.lengthscale)
    if model.name in ("graph_only", "tggp"):
        out["sigma2_sq"] = hp.sigma2_sq
        reg = model.regularizer
        if reg == "softplus_polynomial":
            out["betas"] = list(hp.betas)
        elif reg in ("regularized_laplacian", "pstep_random_walk"):
            out["alpha"] = hp.alpha
        elif reg == "diffusion":
            out["sigma_diff"] = hp.sigma_diff
        elif reg == "graph_matern":
            out.update(nu=hp.nu, kappa=hp.kappa)
    if model.name == "tggp":
        out["sigma_ratio"] = hp.sigma1_sq / hp.sigma2_sq
    return out


def _score(ds, scores):
    test = ds.test
    if ds.task is Task.REGRESSION:
        pred = scores[:, 0]
        err = np.abs(pred - ds.y[test])
        mae_std = float(np.mean(err))
        # de-standardize predictions and labels before scoring
        mae = float(np.mean(np.abs(ds.y_original(pred) - ds.y_original(ds.y[test]))))
        return {"mae": mae, "mae_standardized": mae_std}, ds.y_original(pred)
    pred = classify(scores)
    truth = ds.y[test]
    c = ds.class_count
    confusion = np.zeros((c, c), dtype=int)
    np.add.at(confusion, (truth, pred), 1)
    return {"accuracy": int(np.sum(pred == truth)) / test.size, "confusion": confusion.tolist()}, pred


@dataclass
class SeedResult:
    seed: int
    split_hash: str = None
    metrics: dict = None
    fitted_params: dict = None
    timing: dict = field(default_factory=dict)
    error: str = None
    error_kind: str = None
    predictions: np.ndarray = None  # test-node predictions, original units
    datasets: tuple = field(default=None, repr=False)  # (raw, standardized)

    @property
    def ok(self):
        return self.error is None


def _mean_stderr(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    stderr = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), stderr


@dataclass
class RunReport:
    """Aggregated result of one model over several seeds.

    ``metrics[metric]`` is the mean of ``per_seed`` over successful seeds;
    ``per_seed`` holds ``None`` for failed seeds.
    """

    model: str
    model_config: dict
    task: str
    metric: str
    metrics: dict
    per_seed: list
    seeds: list
    split_hashes: list
    fitted_params: list
    timing: list
    failures: list
    warnings: list = field(default_factory=list)
    config: dict = None
    extra_metrics: list = field(default_factory=list)

    def to_dict(self, include_timing=True):
        d = asdict(self)
        if not include_timing:
            d.pop("timing")
        return d

    def to_json(self, include_timing=True):
        return json.dumps(_jsonable(self.to_dict(include_timing)), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _run_seed(cfg, model, seed, source, n_train=None):
    res = SeedResult(seed=seed)
    try:
        t0 = time.perf_counter()
        raw, ds = prepare_dataset(cfg, seed, source, n_train)
        res.timing["data"] = time.perf_counter() - t0
        res.split_hash = split_hash(ds)
        if ds.test.size == 0:
            raise ParameterError("the test split is empty")
        scores, hp, lml, timing = fit_predict(model, ds, cfg.opt.to_opt_config(seed))
        res.timing.update(timing)
        res.metrics, res.predictions = _score(ds, scores)
        res.fitted_params = _fitted_params(model, hp, lml)
        res.datasets = (raw, ds)
    except SEED_ERRORS as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.error_kind = "data" if isinstance(exc, DATA_ERRORS) else "numerical"
        logger.warning("seed %d failed: %s", seed, res.error)
    return res


def _report(cfg, model, results):
    ok = [r for r in results if r.ok]
    task = None
    metric = None
    if ok:
        task = "regression" if "mae" in ok[0].metrics else "classification"
        metric = "mae" if task == "regression" else "accuracy"
    per_seed = [r.metrics[metric] if r.ok else None for r in results]
    values = [v for v in per_seed if v is not None]
    mean, stderr = _mean_stderr(values)
    metrics = {metric: mean, f"{metric}_stderr": stderr, "n_ok": len(values)} if metric else {"n_ok": 0}
    if metric == "mae":
        metrics["mae_standardized"] = float(np.mean([r.metrics["mae_standardized"] for r in ok]))
        metrics["log_mae"] = float(np.mean(np.log(values)))
    return RunReport(
        model=model.label,
        model_config=asdict(model),
        task=task,
        metric=metric,
        metrics=metrics,
        per_seed=per_seed,
        seeds=[r.seed for r in results],
        split_hashes=[r.split_hash for r in results],
        fitted_params=[r.fitted_params for r in results],
        timing=[r.timing for r in results],
        failures=[{"seed": r.seed, "error": r.error} for r in results if not r.ok],
        config=cfg.to_dict(),
        extra_metrics=[{k: v for k, v in r.metrics.items() if k != metric} if r.ok else None for r in results],
    )


def _raise_if_all_failed(report, results):
    if results and not any(r.ok for r in results):
        kinds = {r.error_kind for r in results}
        kind = "data" if kinds == {"data"} else "numerical"
        raise ExperimentFailed(f"all {len(results)} seeds failed: {results[0].error}", kind, report)


def run_experiment(cfg, model=None, write=True):
    """Run ``model`` (default ``cfg.model``) over ``cfg.train.seeds``.

    Writes ``report.json`` and, for regression on 3-d features,
    ``points.csv`` for the first successful seed into
    ``cfg.output.directory``. Raises :class:`ExperimentFailed` when every
    seed fails.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigError("run_experiment expects an ExperimentConfig")
    model = cfg.model if model is None else model
    source = _load_source(cfg)
    results = [_run_seed(cfg, model, s, source) for s in cfg.train.seeds]
    report = _report(cfg, model, results)
    if write:
        out = Path(cfg.output.directory)
        report.write(out / "report.json")
        first = next((r for r in results if r.ok), None)
        if cfg.output.plot_data and first is not None and report.task == "regression":
            raw, _ = first.datasets
            emit_plot_data(report, raw, first.predictions, out / "points.csv")
            report.write(out / "report.json")
    _raise_if_all_failed(report, results)
    return report


@dataclass
class SweepTable:
    """Per-cell metrics of a sweep plus per-(model, size) summaries."""

    metric: str
    rows: list
    summary: list

    CELL_COLUMNS = ("model", "size", "seed", "split_hash", "metric", "value", "error")
    SUMMARY_COLUMNS = ("model", "size", "n_ok", "mean", "stderr", "mean_log")

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _write_csv(directory / "table.csv", self.CELL_COLUMNS, self.rows)
        _write_csv(directory / "summary.csv", self.SUMMARY_COLUMNS, self.summary)
        return directory / "table.csv"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def sweep_train_sizes(cfg, sizes, seeds, models=None, write=True):
    """Metric for every (model, training size, seed) cell.

    ``models`` are keys understood by :meth:`ExperimentConfig.model_variant`
    (default: the configured model). Failed cells have an empty value.
    """
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ConfigError(f"sizes must be ascending, got {sizes}")
    if cfg.train.use_public_split:
        raise ConfigError("a training-size sweep needs random splits (train.n_train), not the public split")
    keys = [None] if models is None else list(models)
    source = _load_source(cfg)
    rows, summary = [], []
    metric = None
    for key in keys:
        model = cfg.model if key is None else cfg.model_variant(key)
        name = key or model.name
        for size in sizes:
            cells = [_run_seed(cfg, model, s, source, n_train=size) for s in seeds]
            values = []
            for r in cells:
                m = None
                if r.ok:
                    m = "mae" if "mae" in r.metrics else "accuracy"
                    metric = metric or m
                    values.append(r.metrics[m])
                rows.append({"model": name, "size": size, "seed": r.seed, "split_hash": r.split_hash, "metric": m,
                             "value": r.metrics[m] if r.ok else None, "error": r.error})
            mean, stderr = _mean_stderr(values)
            mean_log = float(np.mean(np.log(values))) if values and metric == "mae" else None
            summary.append({"model": name, "size": size, "n_ok": len(values), "mean": mean if values else None,
                            "stderr": stderr if values else None, "mean_log": mean_log})
    table = SweepTable(metric, rows, summary)
    if write:
        table.write(cfg.output.directory)
    return table


def compare_models(cfg, models, write=True):
    """Run several models on identical dataset/split/seed draws.

    Returns one row per entry of ``models`` (duplicates are kept) with the
    mean metric, its standard error, the median fitted ``sigma1_sq /
    sigma2_sq`` ratio and a hash over all seeds' splits.
    """
    models = list(models)
    if len(models) < 2:
        raise ConfigError("compare needs at least two models")
    variants = [cfg.model_variant(m) for m in models]
    rows, reports = [], []
    for key, model in zip(models, variants):
        try:
            report = run_experiment(cfg, model, write=False)
        except ExperimentFailed as exc:
            report = exc.report
        reports.append(report)
        metric = report.metric
        ratios = [p["sigma_ratio"] for p in report.fitted_params if p and "sigma_ratio" in p]
        lmls = [p["lml"] for p in report.fitted_params if p and p.get("lml") is not None]
        digest = hashlib.sha256("".join(h or "-" for h in report.split_hashes).encode()).hexdigest()[:16]
        rows.append({
            "model": key,
            "label": model.label,
            "metric": metric,
            "mean": report.metrics.get(metric) if metric else None,
            "stderr": report.metrics.get(f"{metric}_stderr") if metric else None,
            "n_ok": report.metrics["n_ok"],
            "mean_lml": float(np.mean(lmls)) if lmls else None,
            "median_sigma_ratio": float(np.median(ratios)) if ratios else None,
            "split_hash": digest,
        })
    if write:
        out = Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "table.csv", COMPARE_COLUMNS, rows)
        (out / "reports.json").write_text(
            json.dumps([_jsonable(r.to_dict()) for r in reports], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rows


COMPARE_COLUMNS = ("model", "label", "metric", "mean", "stderr", "n_ok", "mean_lml", "median_sigma_ratio", "split_hash")


def emit_plot_data(report, dataset, predictions, path):
    """Write ``points.csv`` (x, y, z, true_label, predicted_label, is_train).

    ``dataset`` carries the split and the labels; ``predictions`` are the
    test-node predictions in the same units as ``dataset.y_original()``.
    Training nodes get their observed label as prediction. Without 3-d
    features the coordinate columns are omitted and a warning is added to
    ``report.warnings``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = dataset.n
    truth = dataset.y_original()
    pred = np.array(truth, dtype=float)
    pred[dataset.test] = np.asarray(predictions, dtype=float).ravel()
    is_train = np.zeros(n, dtype=int)
    is_train[dataset.train] = 1
    has_xyz = dataset.X.ndim == 2 and dataset.X.shape[1] == 3
    if not has_xyz:
        msg = f"points.csv written without coordinates: features have {dataset.X.shape[1]} columns, not 3"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if report is not None:
            report.warnings.append(msg)
    evaluated = np.zeros(n, dtype=bool)
    evaluated[dataset.train] = True
    evaluated[dataset.test] = True
    columns = (["x", "y", "z"] if has_xyz else []) + ["true_label", "predicted_label", "is_train"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for i in range(n):
            coords = [repr(float(v)) for v in dataset.X[i]] if has_xyz else []
            p = repr(float(pred[i])) if evaluated[i] else ""
            w.writerow(coords + [repr(float(truth[i])), p, int(is_train[i])])
    return path
