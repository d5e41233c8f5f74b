"""Experiment configuration files.

Configs are YAML (JSON is accepted too, being a subset). Every key, its
type and default::

    dataset: builtin:imbalanced   # builtin:<name>, a .mmds path, or an inline synthetic spec mapping
    data_seed: 0                  # generator seed for builtin benchmarks
    model:
      fusion: late_sum            # late_sum | early_maxout
      encoder_hidden: [32]        # hidden widths of every modality encoder
      fusion_hidden_dim: 32       # early_maxout only
      maxout_pieces: 2            # early_maxout only
      num_classes: null           # optional; must match the dataset when given
    method: agm                   # joint | agm | agm1
    alpha: 4.0                    # ignored (recorded as null) for joint
    epochs: 30
    batch_size: 64
    optimizer:
      learning_rate: 0.0005
      momentum: 0.9
      weight_decay: 0.0001
      lr_decay_factor: 0.9
      lr_decay_every: 10
    lambda: 120.0                 # ridge strength of the probe
    concept_padding: zero         # zero | random (early fusion concepts)
    probe_every: 0                # probe d_m every N epochs; 0 = final probe only
    seeds: [0]
    output_dir: runs/default

Relative paths are resolved against the config file's directory.
``MODFORGE_SEED`` (``"3"`` or ``"1,2,3"``) replaces ``seeds``.
"""
import os
from dataclasses import asdict, dataclass, field

import yaml

from ..agm import TrainMethod
from ..data import BENCHMARKS, SyntheticSpec
from ..errors import ConfigError
from ..models import FUSION_KINDS, EARLY_MAXOUT
from ..optim import SgdConfig

SEED_ENV = "MODFORGE_SEED"


@dataclass(frozen=True)
class ModelConfig:
    fusion: str = "late_sum"
    encoder_hidden: tuple = (32,)
    fusion_hidden_dim: int = 32
    maxout_pieces: int = 2
    num_classes: int = None

    def to_dict(self):
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        if self.fusion != EARLY_MAXOUT:
            del d["fusion_hidden_dim"], d["maxout_pieces"]
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: object = "builtin:imbalanced"
    data_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    method: TrainMethod = TrainMethod.AGM
    alpha: float = 4.0
    epochs: int = 30
    batch_size: int = 64
    optimizer: SgdConfig = field(default_factory=lambda: SgdConfig(learning_rate=0.0005))
    lam: float = 120.0
    concept_padding: str = "zero"
    probe_every: int = 0
    seeds: tuple = (0,)
    output_dir: str = "runs/default"

    @property
    def effective_alpha(self):
        return None if self.method is TrainMethod.JOINT else self.alpha

    def to_dict(self):
        ds = self.dataset.to_dict() if isinstance(self.dataset, SyntheticSpec) else self.dataset
        return {
            "dataset": ds,
            "data_seed": self.data_seed,
            "model": self.model.to_dict(),
            "method": self.method.value,
            "alpha": self.effective_alpha,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_dict(),
            "lambda": self.lam,
            "concept_padding": self.concept_padding,
            "probe_every": self.probe_every,
            "seeds": list(self.seeds),
        }


_TOP_KEYS = {"dataset", "data_seed", "model", "method", "alpha", "epochs", "batch_size", "optimizer",
             "lambda", "concept_padding", "probe_every", "seeds", "output_dir"}
_MODEL_KEYS = {"fusion", "encoder_hidden", "fusion_hidden_dim", "maxout_pieces", "num_classes"}


def _int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"config key {key!r} must be >= {minimum}, got {value}")
    return value


def _float(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"config key {key!r} must be >= {minimum}, got {value}")
    return float(value)


def _unknown(d, allowed, where):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown config key(s) {extra} in {where}")


def parse_seed_env(value):
    try:
        seeds = tuple(int(s) for s in value.replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer or comma-separated integers, got {value!r}") from None
    if not seeds:
        raise ConfigError(f"{SEED_ENV} is set but empty")
    return seeds


def _dataset(value, base_dir):
    if isinstance(value, dict):
        try:
            return SyntheticSpec.from_dict(value)
        except KeyError as exc:
            raise ConfigError(f"config key 'dataset.{exc.args[0]}' is required") from None
    if not isinstance(value, str) or not value:
        raise ConfigError("config key 'dataset' must be builtin:<name>, a path, or a mapping")
    if value.startswith("builtin:"):
        if value[len("builtin:"):] not in BENCHMARKS:
            raise ConfigError(f"config key 'dataset': unknown benchmark {value!r}; choose from {sorted(BENCHMARKS)}")
        return value
    return value if os.path.isabs(value) else os.path.normpath(os.path.join(base_dir, value))


def _model(d):
    if not isinstance(d, dict):
        raise ConfigError("config key 'model' must be a mapping")
    _unknown(d, _MODEL_KEYS, "model")
    fusion = d.get("fusion", "late_sum")
    if fusion not in FUSION_KINDS:
        raise ConfigError(f"config key 'model.fusion' must be one of {FUSION_KINDS}, got {fusion!r}")
    hidden = d.get("encoder_hidden", [32])
    if not isinstance(hidden, (list, tuple)):
        raise ConfigError("config key 'model.encoder_hidden' must be a list of integers")
    hidden = tuple(_int(h, "model.encoder_hidden", 1) for h in hidden)
    k = d.get("num_classes")
    return ModelConfig(fusion, hidden, _int(d.get("fusion_hidden_dim", 32), "model.fusion_hidden_dim", 1),
                       _int(d.get("maxout_pieces", 2), "model.maxout_pieces", 2),
                       None if k is None else _int(k, "model.num_classes", 2))


def _optimizer(d):
    if not isinstance(d, dict):
        raise ConfigError("config key 'optimizer' must be a mapping")
    known = set(SgdConfig.__dataclass_fields__)
    _unknown(d, known, "optimizer")
    merged = {"learning_rate": 0.0005, **d}
    for key, value in merged.items():
        if key == "lr_decay_every":
            _int(value, "optimizer.lr_decay_every", 1)
        else:
            _float(value, f"optimizer.{key}")
    try:
        return SgdConfig(**merged)
    except ConfigError as exc:
        raise ConfigError(f"config key 'optimizer': {exc}") from None


def from_dict(d, base_dir=".", env=None):
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping at the top level")
    _unknown(d, _TOP_KEYS, "the top level")
    env = os.environ if env is None else env
    try:
        method = TrainMethod.parse(d.get("method", "agm"))
    except ConfigError as exc:
        raise ConfigError(f"config key 'method': {exc}") from None
    seeds = d.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config key 'seeds' must be a non-empty list of integers")
    seeds = tuple(_int(s, "seeds", 0) for s in seeds)
    if env.get(SEED_ENV):
        seeds = parse_seed_env(env[SEED_ENV])
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"config key 'seeds' has duplicates: {list(seeds)}")
    padding = d.get("concept_padding", "zero")
    if padding not in ("zero", "random"):
        raise ConfigError(f"config key 'concept_padding' must be zero or random, got {padding!r}")
    out = d.get("output_dir", "runs/default")
    if not isinstance(out, str) or not out:
        raise ConfigError("config key 'output_dir' must be a non-empty path")
    return ExperimentConfig(
        dataset=_dataset(d.get("dataset", "builtin:imbalanced"), base_dir),
        data_seed=_int(d.get("data_seed", 0), "data_seed", 0),
        model=_model(d.get("model", {})),
        method=method,
        alpha=_float(d.get("alpha", 4.0), "alpha", 0.0),
        epochs=_int(d.get("epochs", 30), "epochs", 0),
        batch_size=_int(d.get("batch_size", 64), "batch_size", 1),
        optimizer=_optimizer(d.get("optimizer", {})),
        lam=_float(d.get("lambda", 120.0), "lambda", 0.0),
        concept_padding=padding,
        probe_every=_int(d.get("probe_every", 0), "probe_every", 0),
        seeds=seeds,
        output_dir=out if os.path.isabs(out) else os.path.normpath(os.path.join(base_dir, out)),
    )


def load(path, env=None):
    """Parse and validate a config file. I/O problems surface as ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML/JSON: {exc}") from None
    return from_dict(raw if raw is not None else {}, os.path.dirname(os.path.abspath(path)), env)
