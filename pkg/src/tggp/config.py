"""Experiment configuration read from TOML files.

Every key is optional; the defaults below reproduce a single Swiss-roll run::

    [dataset]
    # either a directory in the layout read by tggp.data.load_dataset ...
    # path = "data/texas"
    # ... or the synthetic generator (default)
    swiss_roll = { n = 1000, k = 4, noise = 0.0 }

    [model]
    name = "tggp"                        # gp | graph_only | tggp | lp
    base = "rbf"                         # rbf | matern12
    regularizer = "softplus_polynomial"  # see tggp.kernels.Regularizer
    degree = 4                           # softplus polynomial degree
    p_steps = 2                          # p-step random walk steps
    lp_alpha = 0.9                       # label propagation strength

    [train]
    n_train = 10              # random split size; or
    # use_public_split = true # the splits stored with the dataset
    merge_validation = false  # train on train + validation labels
    seeds = 1                 # a count (0..seeds-1) or an explicit list

    [opt]
    restarts = 2
    max_iters = 200
    seed = 0                  # added to each run seed
    # any other tggp.hyperopt.OptConfig field, e.g. step_size = 0.1

    [output]
    directory = "results"     # relative to the config file
    plot_data = true          # points.csv for 3-d regression runs

    # named model variants usable with ``compare --models``; unspecified
    # fields fall back to [model]
    [variants.graph_reglap]
    name = "graph_only"
    regularizer = "regularized_laplacian"
"""

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError
from .hyperopt import OptConfig
from .kernels import Base, Regularizer

__all__ = [
    "SwissRollConfig",
    "DatasetConfig",
    "ModelConfig",
    "TrainConfig",
    "OptSection",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

MODEL_NAMES = ("gp", "graph_only", "tggp", "lp")


@dataclass(frozen=True)
class SwissRollConfig:
    n: int = 1000
    k: int = 4
    noise: float = 0.0


@dataclass(frozen=True)
class DatasetConfig:
    path: Path = None
    swiss_roll: SwissRollConfig = None

    def __post_init__(self):
        if self.path is None and self.swiss_roll is None:
            object.__setattr__(self, "swiss_roll", SwissRollConfig())
        if self.path is not None and self.swiss_roll is not None:
            raise ConfigError("dataset: give either path or swiss_roll, not both")


@dataclass(frozen=True)
class ModelConfig:
    name: str = "tggp"
    base: str = "rbf"
    regularizer: str = "softplus_polynomial"
    degree: int = 4
    p_steps: int = 2
    lp_alpha: float = 0.9

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ConfigError(f"model.name must be one of {MODEL_NAMES}, got {self.name!r}")
        if self.base not in {b.value for b in Base if b is not Base.NONE}:
            raise ConfigError(f"unknown model.base {self.base!r}")
        if self.regularizer not in {r.value for r in Regularizer if r is not Regularizer.NONE}:
            raise ConfigError(f"unknown model.regularizer {self.regularizer!r}")
        if not isinstance(self.degree, int) or self.degree < 0:
            raise ConfigError(f"model.degree must be an integer >= 0, got {self.degree!r}")
        if not isinstance(self.p_steps, int) or self.p_steps < 1:
            raise ConfigError(f"model.p_steps must be an integer >= 1, got {self.p_steps!r}")
        if not self.lp_alpha > 0:
            raise ConfigError(f"model.lp_alpha must be positive, got {self.lp_alpha!r}")

    @property
    def label(self):
        """Short human-readable description."""
        if self.name == "gp":
            return f"gp[{self.base}]"
        if self.name == "graph_only":
            return f"graph_only[{self.regularizer}]"
        if self.name == "lp":
            return "lp"
        return f"tggp[{self.base},{self.regularizer}]"


@dataclass(frozen=True)
class TrainConfig:
    n_train: int = None
    use_public_split: bool = False
    merge_validation: bool = False
    seeds: tuple = (0,)

    def __post_init__(self):
        if (self.n_train is None) == (not self.use_public_split):
            raise ConfigError("train: set exactly one of n_train or use_public_split")
        if self.n_train is not None and (not isinstance(self.n_train, int) or self.n_train < 1):
            raise ConfigError(f"train.n_train must be a positive integer, got {self.n_train!r}")
        seeds = self.seeds
        if isinstance(seeds, int):
            if seeds < 1:
                raise ConfigError("train.seeds must be >= 1")
            seeds = tuple(range(seeds))
        seeds = tuple(seeds)
        if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ConfigError(f"train.seeds must be a count or a list of nonnegative integers, got {self.seeds!r}")
        object.__setattr__(self, "seeds", seeds)


@dataclass(frozen=True)
class OptSection:
    restarts: int = 2
    max_iters: int = 200
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def to_opt_config(self, run_seed):
        try:
            return OptConfig(restarts=self.restarts, max_iters=self.max_iters, seed=self.seed + run_seed, **self.extra)
        except TypeError as exc:
            raise ConfigError(f"opt: {exc}") from None


@dataclass(frozen=True)
class OutputConfig:
    directory: Path = Path("results")
    plot_data: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(n_train=10))
    opt: OptSection = field(default_factory=OptSection)
    output: OutputConfig = field(default_factory=OutputConfig)
    variants: dict = field(default_factory=dict)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def model_variant(self, key):
        """Model config for ``key``: a ``[variants]`` entry or a model name."""
        if key in self.variants:
            return self.variants[key]
        if key in MODEL_NAMES:
            return dataclasses.replace(self.model, name=key)
        raise ConfigError(f"unknown model {key!r}; expected one of {MODEL_NAMES} or a [variants] entry")

    def to_dict(self):
        """Plain, JSON-serializable view (paths as strings)."""

        def plain(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: plain(getattr(obj, f.name)) for f in fields(obj)}
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            if isinstance(obj, Path):
                return str(obj)
            return obj

        return plain(self)


def _section(cls, raw, where, **converted):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    values = {**raw, **converted}
    return cls(**values)


def parse_config(raw, base_dir="."):
    """:class:`ExperimentConfig` from a parsed TOML mapping."""
    base_dir = Path(base_dir)
    raw = dict(raw)
    unknown = set(raw) - {"dataset", "model", "train", "opt", "output", "variants"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    ds_raw = dict(raw.get("dataset", {}))
    conv = {}
    if "path" in ds_raw:
        p = Path(ds_raw["path"])
        conv["path"] = p if p.is_absolute() else base_dir / p
    if "swiss_roll" in ds_raw:
        conv["swiss_roll"] = _section(SwissRollConfig, ds_raw["swiss_roll"], "dataset.swiss_roll")
    dataset = _section(DatasetConfig, ds_raw, "dataset", **conv)

    model_raw = raw.get("model", {})
    model = _section(ModelConfig, model_raw, "model")

    train_raw = dict(raw.get("train", {}))
    if dataset.path is None and "n_train" not in train_raw and not train_raw.get("use_public_split", False):
        # synthetic data has no stored split
        train_raw["n_train"] = 10
    train = _section(TrainConfig, train_raw, "train")

    opt_raw = dict(raw.get("opt", {}))
    core = {k: opt_raw.pop(k) for k in ("restarts", "max_iters", "seed") if k in opt_raw}
    opt_fields = {f.name for f in fields(OptConfig)} - {"restarts", "max_iters", "seed"}
    bad = set(opt_raw) - opt_fields
    if bad:
        raise ConfigError(f"[opt] unknown keys: {sorted(bad)}")
    opt = OptSection(extra=opt_raw, **core)
    opt.to_opt_config(0)  # validates field types early

    out_raw = dict(raw.get("output", {}))
    if "directory" in out_raw:
        d = Path(out_raw["directory"])
        out_raw["directory"] = d if d.is_absolute() else base_dir / d
    else:
        out_raw["directory"] = base_dir / "results"
    output = _section(OutputConfig, out_raw, "output")

    variants = {}
    for key, body in raw.get("variants", {}).items():
        if not isinstance(body, dict):
            raise ConfigError(f"[variants.{key}] must be a table")
        merged = {**{f.name: getattr(model, f.name) for f in fields(ModelConfig)}, **body}
        variants[key] = _section(ModelConfig, merged, f"variants.{key}")

    return ExperimentConfig(dataset, model, train, opt, output, variants)


def load_config(path):
    """Read and validate a TOML experiment file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent)
