"""Datasets: Swiss-roll generator, on-disk format, splits and scaling.

On-disk layout of a dataset directory (UTF-8, ``#`` lines ignored)::

    edges.tsv     src<TAB>dst[<TAB>weight]   0-based ids, weight defaults to 1
    features.csv  one comma-separated row per node
    labels.txt    one label per node (int class id or real value)
    splits.json   {"train": [...], "validation": [...], "test": [...]}
    meta.json     {"task": "regression"|"classification", "class_count": c, "name": ...}
"""

import enum
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError, GenerationError, ParameterError
from .graph import (
    Graph,
    build_knn_graph,
    is_connected,
    normalized_laplacian,
    spectral_decompose,
    symmetrize_adjacency,
)

__all__ = [
    "Task",
    "Dataset",
    "generate_swiss_roll",
    "sample_training_split",
    "load_dataset",
    "save_dataset",
    "merge_validation_into_train",
    "standardize_features",
]

SPLIT_NAMES = ("train", "validation", "test")
_MAX_RETRIES = 20


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def _index_array(idx):
    return np.asarray(sorted(int(i) for i in idx), dtype=int) if len(idx) else np.zeros(0, dtype=int)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Node features, labels, graph and split index sets.

    Regression labels may be stored standardized; ``target_mean`` and
    ``target_scale`` map them back to original units.
    """

    X: np.ndarray
    y: np.ndarray
    graph: Graph
    splits: dict = field(default_factory=dict)
    task: Task = Task.REGRESSION
    class_count: int = 0
    name: str = ""
    target_mean: float = 0.0
    target_scale: float = 1.0
    feature_mean: np.ndarray = None
    feature_scale: np.ndarray = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = X.shape[0]
        task = Task(self.task)
        y = np.asarray(self.y, dtype=int if task is Task.CLASSIFICATION else float).ravel()
        if y.shape[0] != n or self.graph.n != n:
            raise ParameterError(f"features ({n}), labels ({y.shape[0]}) and graph ({self.graph.n}) disagree on n")
        splits = {k: _index_array(self.splits.get(k, ())) for k in SPLIT_NAMES}
        for k, idx in splits.items():
            if idx.size and (idx[0] < 0 or idx[-1] >= n):
                raise ParameterError(f"{k} split has indices outside [0, {n})")
            if np.unique(idx).size != idx.size:
                raise ParameterError(f"{k} split has repeated indices")
        for a, b in (("train", "validation"), ("train", "test"), ("validation", "test")):
            if np.intersect1d(splits[a], splits[b]).size:
                raise ParameterError(f"{a} and {b} splits overlap")
        if task is Task.CLASSIFICATION and y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ParameterError(f"class labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "splits", splits)

    @property
    def n(self):
        return self.X.shape[0]

    @cached_property
    def spectrum(self):
        """Eigendecomposition of the normalized Laplacian, computed once."""
        return spectral_decompose(normalized_laplacian(self.graph))

    @property
    def train(self):
        return self.splits["train"]

    @property
    def validation(self):
        return self.splits["validation"]

    @property
    def test(self):
        return self.splits["test"]

    def y_original(self, values=None):
        """Labels (or ``values``) mapped back to original regression units."""
        v = self.y if values is None else np.asarray(values, dtype=float)
        return v * self.target_scale + self.target_mean

    def replace(self, **changes):
        new = replace(self, **changes)
        if "graph" not in changes and "spectrum" in self.__dict__:
            new.__dict__["spectrum"] = self.__dict__["spectrum"]
        return new


def generate_swiss_roll(n=1000, k=4, noise=0.0, seed=0):
    """Sample a Swiss roll with a kNN graph and the roll parameter as label.

    ``t ~ U[1.5 pi, 4.5 pi]``, ``h ~ U[0, 21]``, point ``(t cos t, h, t sin t)``
    plus isotropic Gaussian noise. The label is ``t`` standardized, so it
    grows from the inner end of the roll to the outer end. Draws are repeated
    until the kNN graph is connected.
    """
    if n < 10:
        raise ParameterError(f"need at least 10 points, got {n}")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RETRIES):
        t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
        h = rng.uniform(0.0, 21.0, size=n)
        X = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
        if noise > 0:
            X = X + noise * rng.standard_normal(X.shape)
        g = build_knn_graph(X, k)
        if is_connected(g):
            break
    else:
        raise GenerationError(f"no connected {k}-NN graph after {_MAX_RETRIES} draws")
    mu, sd = t.mean(), t.std()
    return Dataset(
        X=X,
        y=(t - mu) / sd,
        graph=g,
        splits={"train": (), "validation": (), "test": ()},
        task=Task.REGRESSION,
        name="swiss_roll",
        target_mean=float(mu),
        target_scale=float(sd),
    )


def sample_training_split(ds, n_train, seed=0):
    """Draw ``n_train`` training nodes uniformly; every other node is test."""
    if not 1 <= n_train < ds.n:
        raise ParameterError(f"n_train must lie in [1, {ds.n}), got {n_train}")
    rng = np.random.default_rng(seed)
    train = np.sort(rng.choice(ds.n, size=n_train, replace=False))
    test = np.setdiff1d(np.arange(ds.n), train)
    return ds.replace(splits={"train": train, "validation": (), "test": test})


def merge_validation_into_train(ds):
    """Move validation labels into the training set (the "-X" protocol)."""
    if ds.validation.size == 0:
        return ds
    train = np.union1d(ds.train, ds.validation)
    return ds.replace(splits={"train": train, "validation": (), "test": ds.test})


def standardize_features(ds):
    """Zero-mean, unit-variance feature columns over all nodes.

    Constant columns become zero. The transform is recorded in
    ``feature_mean``/``feature_scale`` (composed with any earlier one).
    """
    X = ds.X
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd_safe
    prev_mu = np.zeros_like(mu) if ds.feature_mean is None else ds.feature_mean
    prev_sd = np.ones_like(sd) if ds.feature_scale is None else ds.feature_scale
    return ds.replace(X=Z, feature_mean=prev_mu + prev_sd * mu, feature_scale=prev_sd * sd_safe)


def _data_lines(path):
    if not path.is_file():
        raise DataFormatError(path, None, "missing file")
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def _load_json(path):
    if not path.is_file():
        raise DataFormatError(path, None, "missing file")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None


def load_dataset(dir_path):
    """Read a dataset directory; the adjacency is symmetrized on load."""
    root = Path(dir_path)
    meta = _load_json(root / "meta.json")
    try:
        task = Task(meta.get("task", "classification"))
    except ValueError:
        raise DataFormatError(root / "meta.json", None, f"unknown task {meta.get('task')!r}") from None

    rows = []
    width = None
    path = root / "features.csv"
    for lineno, line in _data_lines(path):
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise DataFormatError(path, lineno, "non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(path, lineno, f"expected {width} columns, got {len(row)}")
        rows.append(row)
    X = np.asarray(rows, dtype=float)
    n = X.shape[0]

    labels = []
    path = root / "labels.txt"
    for lineno, line in _data_lines(path):
        try:
            labels.append(int(line) if task is Task.CLASSIFICATION else float(line))
        except ValueError:
            raise DataFormatError(path, lineno, f"bad {task.value} label {line!r}") from None
    if len(labels) != n:
        raise DataFormatError(path, None, f"expected {n} labels, got {len(labels)}")

    A = np.zeros((n, n))
    seen = {}
    path = root / "edges.tsv"
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DataFormatError(path, lineno, "expected src<TAB>dst[<TAB>weight]")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise DataFormatError(path, lineno, "non-numeric edge field") from None
        if not (0 <= i < n and 0 <= j < n):
            raise DataFormatError(path, lineno, f"node id out of range [0, {n})")
        if w < 0 or not np.isfinite(w):
            raise DataFormatError(path, lineno, f"invalid edge weight {w}")
        if (i, j) in seen and seen[(i, j)] != w:
            raise DataFormatError(path, lineno, f"edge ({i}, {j}) repeated with conflicting weight")
        seen[(i, j)] = w
        A[i, j] = w

    path = root / "splits.json"
    raw = _load_json(path)
    splits = {}
    for key in SPLIT_NAMES:
        idx = raw.get(key, [])
        if not all(isinstance(v, int) for v in idx):
            raise DataFormatError(path, None, f"{key} must be an array of integers")
        if any(v < 0 or v >= n for v in idx):
            raise DataFormatError(path, None, f"{key} index out of range [0, {n})")
        splits[key] = idx

    try:
        return Dataset(
            X=X,
            y=np.asarray(labels),
            graph=Graph(symmetrize_adjacency(A)),
            splits=splits,
            task=task,
            class_count=int(meta.get("class_count", 0)),
            name=str(meta.get("name", root.name)),
            target_mean=float(meta.get("target_mean", 0.0)),
            target_scale=float(meta.get("target_scale", 1.0)),
        )
    except ParameterError as exc:
        raise DataFormatError(root, None, str(exc)) from None


def save_dataset(ds, dir_path):
    """Write ``ds`` in the directory layout read by :func:`load_dataset`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    A = ds.graph.adjacency
    with open(root / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        # both directions, so symmetrization on load is the identity
        for i, j in zip(*np.nonzero(A)):
            fh.write(f"{i}\t{j}\t{float(A[i, j])!r}\n")
    with open(root / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        for row in ds.X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(root / "labels.txt", "w", encoding="utf-8", newline="\n") as fh:
        for v in ds.y:
            fh.write(f"{int(v)}\n" if ds.task is Task.CLASSIFICATION else f"{float(v)!r}\n")
    with open(root / "splits.json", "w", encoding="utf-8") as fh:
        json.dump({k: [int(i) for i in ds.splits[k]] for k in SPLIT_NAMES}, fh)
    meta = {"task": ds.task.value, "class_count": int(ds.class_count), "name": ds.name}
    if ds.task is Task.REGRESSION:
        meta.update(target_mean=ds.target_mean, target_scale=ds.target_scale)
    with open(root / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
