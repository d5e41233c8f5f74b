"""Multi-modal MLP classifiers with late (summed logits) or early (maxout) fusion."""
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .errors import ConfigError, DimensionError, UsageError
from .tensor import Tensor, add, concat, matmul, maxout, relu

LATE_SUM = "late_sum"
EARLY_MAXOUT = "early_maxout"
FUSION_KINDS = (LATE_SUM, EARLY_MAXOUT)


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    input_dim: int
    encoder_hidden: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(int(h) for h in self.encoder_hidden))
        if not self.name:
            raise ConfigError("modality name must be non-empty")
        if int(self.input_dim) < 1:
            raise ConfigError(f"modality {self.name!r}: input_dim must be positive")
        if any(h < 1 for h in self.encoder_hidden):
            raise ConfigError(f"modality {self.name!r}: encoder widths must be positive")

    @property
    def output_dim(self):
        return self.encoder_hidden[-1] if self.encoder_hidden else self.input_dim

    def to_dict(self):
        return {"name": self.name, "input_dim": self.input_dim, "encoder_hidden": list(self.encoder_hidden)}


@dataclass(frozen=True)
class FusionSpec:
    kind: str = LATE_SUM
    fusion_hidden_dim: int = 32
    maxout_pieces: int = 2

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ConfigError(f"fusion kind must be one of {FUSION_KINDS}, got {self.kind!r}")
        if self.kind == EARLY_MAXOUT:
            if self.fusion_hidden_dim < 1:
                raise ConfigError("fusion_hidden_dim must be positive")
            if self.maxout_pieces < 2:
                raise ConfigError("maxout_pieces must be at least 2")

    def to_dict(self):
        if self.kind == LATE_SUM:
            return {"kind": self.kind}
        return {"kind": self.kind, "fusion_hidden_dim": self.fusion_hidden_dim,
                "maxout_pieces": self.maxout_pieces}


def _init_param(seed, name, shape, fan_in):
    rng = np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


@dataclass
class MultiModalModel:
    """Encoder-per-modality classifier.

    Parameters are drawn per name from ``(seed, crc32(name))`` so a
    sub-architecture built with the same seed (e.g. a single late-fusion
    branch) starts from exactly the same weights as inside the full model.
    """

    modalities: list
    fusion: FusionSpec
    num_classes: int
    seed: int = 0
    params: dict = field(default_factory=dict, repr=False)
    forward_count: int = field(default=0, repr=False)
    branch_evals: int = field(default=0, repr=False)

    def __post_init__(self):
        self.modalities = list(self.modalities)
        if not self.modalities:
            raise ConfigError("a model needs at least one modality")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names: {names}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if not self.params:
            self._build()

    @property
    def names(self):
        return [m.name for m in self.modalities]

    @property
    def kind(self):
        return self.fusion.kind

    def spec(self, name):
        for m in self.modalities:
            if m.name == name:
                return m
        raise ConfigError(f"unknown modality {name!r}; model has {self.names}")

    def _add(self, name, shape, fan_in):
        self.params[name] = _init_param(self.seed, name, shape, fan_in)

    def _build(self):
        K = self.num_classes
        for m in self.modalities:
            width = m.input_dim
            for i, h in enumerate(m.encoder_hidden):
                self._add(f"enc.{m.name}.{i}.weight", (width, h), width)
                self._add(f"enc.{m.name}.{i}.bias", (h,), width)
                width = h
            if self.kind == LATE_SUM:
                self._add(f"head.{m.name}.weight", (width, K), width)
                self._add(f"head.{m.name}.bias", (K,), width)
        if self.kind == EARLY_MAXOUT:
            width = sum(m.output_dim for m in self.modalities)
            H = self.fusion.fusion_hidden_dim
            for p in range(self.fusion.maxout_pieces):
                self._add(f"fusion.{p}.weight", (width, H), width)
                self._add(f"fusion.{p}.bias", (H,), width)
            self._add("head.weight", (H, K), H)
            self._add("head.bias", (K,), H)

    # -- forward pieces -------------------------------------------------

    def _input(self, batch, name):
        spec = self.spec(name)
        if name not in batch:
            raise ConfigError(f"batch is missing modality {name!r}")
        x = np.asarray(batch[name], dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != spec.input_dim:
            raise DimensionError(f"modality {name!r}: expected [N, {spec.input_dim}], got {x.shape}")
        return x

    def _batch_size(self, batch):
        sizes = {np.shape(batch[n])[0] for n in self.names if n in batch}
        if len(sizes) != 1:
            raise DimensionError(f"modalities disagree on batch size: {sorted(sizes)}")
        return sizes.pop()

    def encode(self, name, x):
        h = Tensor(x) if not isinstance(x, Tensor) else x
        for i in range(len(self.spec(name).encoder_hidden)):
            h = relu(add(matmul(h, self.params[f"enc.{name}.{i}.weight"]),
                         self.params[f"enc.{name}.{i}.bias"]))
        return h

    def branch_logits(self, name, x):
        """Logits of one late-fusion branch on that modality's features."""
        if self.kind != LATE_SUM:
            raise UsageError("branch_logits is only defined for late fusion")
        self.branch_evals += 1
        h = self.encode(name, np.asarray(x, dtype=np.float64))
        return add(matmul(h, self.params[f"head.{name}.weight"]), self.params[f"head.{name}.bias"])

    def head(self, z):
        if self.kind != EARLY_MAXOUT:
            raise UsageError("a single head exists only for early fusion")
        return add(matmul(z, self.params["head.weight"]), self.params["head.bias"])

    def _fuse(self, encoded):
        z = concat(encoded, axis=1) if len(encoded) > 1 else encoded[0]
        pieces = [add(matmul(z, self.params[f"fusion.{p}.weight"]), self.params[f"fusion.{p}.bias"])
                  for p in range(self.fusion.maxout_pieces)]
        return maxout(pieces)

    def forward_masked(self, batch, present):
        """phi(S) for the set ``present`` of modalities actually observed.

        Late fusion drops the absent branches; early fusion feeds zeros of
        the same width in place of each absent modality.
        """
        present = set(present)
        unknown = present - set(self.names)
        if unknown:
            raise ConfigError(f"unknown modality name(s) {sorted(unknown)}; model has {self.names}")
        if not present:
            raise ConfigError("forward_masked needs at least one present modality")
        self.forward_count += 1
        if self.kind == LATE_SUM:
            out = None
            for name in self.names:
                if name in present:
                    logits = self.branch_logits(name, self._input(batch, name))
                    out = logits if out is None else add(out, logits)
            return out
        n = self._batch_size(batch)
        encoded = []
        for m in self.modalities:
            x = self._input(batch, m.name) if m.name in present else np.zeros((n, m.input_dim))
            encoded.append(self.encode(m.name, x))
        return self.head(self._fuse(encoded))

    def forward_full(self, batch):
        return self.forward_masked(batch, self.names)

    __call__ = forward_full

    def latent_features(self, batch):
        """The representation entering the classifier layer(s).

        Early fusion: the maxout output. Late fusion: the branch penultimate
        activations concatenated in modality order.
        """
        encoded = [self.encode(m.name, self._input(batch, m.name)) for m in self.modalities]
        if self.kind == EARLY_MAXOUT:
            return self._fuse(encoded)
        return concat(encoded, axis=1) if len(encoded) > 1 else encoded[0]

    # -- parameters -----------------------------------------------------

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state_dict(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for n, p in self.params.items():
            if arrays[n].shape != p.shape:
                raise DimensionError(f"parameter {n!r}: shape {arrays[n].shape} != {p.shape}")
            p.data = np.array(arrays[n], dtype=np.float64)

    def save(self, path):
        checkpoint.save(self.state_dict(), path)

    def load(self, path):
        self.load_state_dict(checkpoint.load(path))

    def num_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def to_dict(self):
        return {
            "modalities": [m.to_dict() for m in self.modalities],
            "fusion": self.fusion.to_dict(),
            "num_classes": self.num_classes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return build([ModalitySpec(**m) for m in d["modalities"]], FusionSpec(**d["fusion"]),
                     d["num_classes"], d.get("seed", 0))


def build(modalities, fusion, num_classes, seed=0):
    return MultiModalModel(list(modalities), fusion, int(num_classes), int(seed))
