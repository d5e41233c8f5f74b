"""Synthetic multi-modal datasets, stratified splits, batching and ``.mmds`` files.

``.mmds`` layout (little-endian)::

    b"MMDS" | version u32 | header_len u64 | header (UTF-8 JSON)
    | labels u16[N] | per modality, in header order: features f32[N, d_m]

The JSON header carries ``num_samples``, ``num_classes``,
``modalities: [{name, dim}]``, ``label_dtype: "u16"``,
``feature_dtype: "f32"`` and a free-form ``provenance`` object. Externally
extracted features can be packed into the same layout and loaded with
:func:`load`.
"""
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, UsageError

MAGIC = b"MMDS"
VERSION = 1
DEFAULT_FRACTIONS = (0.6, 0.2, 0.1, 0.1)
SPLIT_NAMES = ("train", "val", "probe_fit", "probe_eval")


@dataclass(frozen=True)
class SyntheticModality:
    name: str
    dim: int
    snr: float


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class-mean generator.

    ``x^m = snr_m * ((1 - g) * mu^m[y] + g * P^m mu_shared[y]) + eps``, with
    ``eps ~ N(0, I)``, class means ``mu^m[y] ~ N(0, I)``, shared class
    latents of width ``shared_dim`` and ``P^m`` a fixed Gaussian map scaled so
    its outputs have unit variance per coordinate.
    """

    num_classes: int
    num_samples: int
    modalities: tuple
    shared_signal_fraction: float = 0.0
    shared_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        mods = tuple(m if isinstance(m, SyntheticModality) else SyntheticModality(**m)
                     for m in self.modalities)
        object.__setattr__(self, "modalities", mods)
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_samples < self.num_classes:
            raise ConfigError(f"num_samples ({self.num_samples}) must be >= num_classes")
        if not mods:
            raise ConfigError("modalities must be non-empty")
        names = [m.name for m in mods]
        if len(set(names)) != len(names):
            raise ConfigError(f"modalities: duplicate names {names}")
        for m in mods:
            if m.dim < 1:
                raise ConfigError(f"modalities.{m.name}.dim must be >= 1")
            if m.snr < 0:
                raise ConfigError(f"modalities.{m.name}.snr must be >= 0")
        if not 0.0 <= self.shared_signal_fraction <= 1.0:
            raise ConfigError("shared_signal_fraction must lie in [0, 1]")
        if self.shared_dim < 1:
            raise ConfigError("shared_dim must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["modalities"] = [asdict(m) for m in self.modalities]
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("spec must be a mapping")
        allowed = {"num_classes", "num_samples", "modalities", "shared_signal_fraction",
                   "shared_dim", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown spec key(s): {sorted(unknown)}")
        for key in ("num_classes", "num_samples", "modalities"):
            if key not in d:
                raise ConfigError(f"missing spec key {key!r}")
        for key in ("num_classes", "num_samples", "shared_dim", "seed"):
            if key in d and (not isinstance(d[key], int) or isinstance(d[key], bool)):
                raise ConfigError(f"spec key {key!r} must be an integer, got {d[key]!r}")
        mods = d["modalities"]
        if not isinstance(mods, list):
            raise ConfigError("spec key 'modalities' must be a list")
        parsed = []
        for i, m in enumerate(mods):
            if not isinstance(m, dict) or set(m) != {"name", "dim", "snr"}:
                raise ConfigError(f"spec key 'modalities[{i}]' needs exactly name, dim, snr")
            if not isinstance(m["dim"], int):
                raise ConfigError(f"spec key 'modalities[{i}].dim' must be an integer")
            if not isinstance(m["snr"], (int, float)):
                raise ConfigError(f"spec key 'modalities[{i}].snr' must be a number")
            parsed.append(SyntheticModality(str(m["name"]), int(m["dim"]), float(m["snr"])))
        frac = d.get("shared_signal_fraction", 0.0)
        if not isinstance(frac, (int, float)):
            raise ConfigError("spec key 'shared_signal_fraction' must be a number")
        return cls(d["num_classes"], d["num_samples"], tuple(parsed), float(frac),
                   d.get("shared_dim", 8), d.get("seed", 0))


def _bench(snrs, dims, names, seed):
    mods = tuple(SyntheticModality(n, d, s) for n, d, s in zip(names, dims, snrs))
    return SyntheticSpec(num_classes=4, num_samples=4000, modalities=mods, seed=seed)


# The strong modality of ``imbalanced`` is squeezed into two dimensions so
# that neither modality alone saturates accuracy within a 30-epoch budget.
BENCHMARKS = {
    "balanced": lambda seed: _bench((1.5, 1.5), (20, 20), ("a", "v"), seed),
    "imbalanced": lambda seed: _bench((3.0, 0.5), (2, 20), ("a", "v"), seed),
    "trimodal": lambda seed: _bench((2.5, 1.0, 0.3), (2, 8, 20), ("a", "v", "t"), seed),
}


def benchmark(name, seed=0):
    try:
        return BENCHMARKS[name](seed)
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None


@dataclass
class Dataset:
    features: dict  # name -> float64 [N, d]
    labels: np.ndarray
    num_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        for name, x in self.features.items():
            if x.ndim != 2 or x.shape[0] != n:
                raise ConfigError(f"modality {name!r} has shape {x.shape}, expected [{n}, d]")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError("labels outside [0, num_classes)")

    @property
    def names(self):
        return list(self.features)

    @property
    def num_samples(self):
        return int(self.labels.shape[0])

    @property
    def dims(self):
        return {n: int(x.shape[1]) for n, x in self.features.items()}

    def take(self, idx):
        """Return ``(batch, labels)`` for the given sample indices."""
        idx = np.asarray(idx, dtype=np.intp)
        return {n: x[idx] for n, x in self.features.items()}, self.labels[idx]

    def with_features(self, **replacements):
        feats = dict(self.features)
        feats.update(replacements)
        return Dataset(feats, self.labels.copy(), self.num_classes, dict(self.provenance))

    def summary(self):
        dims = ", ".join(f"{n}={d}" for n, d in self.dims.items())
        return f"N={self.num_samples} K={self.num_classes} dims: {dims}"


def _to_f32_exact(x):
    return x.astype(np.float32).astype(np.float64)


def generate(spec):
    rng = np.random.default_rng(spec.seed)
    K, N = spec.num_classes, spec.num_samples
    g = spec.shared_signal_fraction
    means = {m.name: rng.standard_normal((K, m.dim)) for m in spec.modalities}
    shared = rng.standard_normal((K, spec.shared_dim))
    proj = {m.name: rng.standard_normal((spec.shared_dim, m.dim)) / math.sqrt(spec.shared_dim)
            for m in spec.modalities}
    while True:
        labels = rng.integers(0, K, size=N)
        if np.unique(labels).size == K:
            break
    feats = {}
    for m in spec.modalities:
        signal = (1.0 - g) * means[m.name][labels] + g * (shared[labels] @ proj[m.name])
        feats[m.name] = _to_f32_exact(m.snr * signal + rng.standard_normal((N, m.dim)))
    return Dataset(feats, labels, K, {"kind": "synthetic", "spec": spec.to_dict()})


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    probe_fit: np.ndarray
    probe_eval: np.ndarray

    def __getitem__(self, name):
        if name not in SPLIT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def sizes(self):
        return {n: int(len(self[n])) for n in SPLIT_NAMES}


def _split_counts(class_sizes, totals):
    """Integer allocation per (class, split) with exact row and column totals.

    The target for class ``c`` in split ``j`` is ``totals[j] * share_c``,
    so every cell ends within one sample of the global class proportion.
    Floors are taken first; the leftover units form a 0/1 matrix with known
    margins, filled column by column giving each unit to the classes with
    the most units still owed (ties broken by the larger fractional part).
    """
    class_sizes = np.asarray(class_sizes)
    n = int(class_sizes.sum())
    cols = list(totals) + [n - int(sum(totals))]
    ideal = np.outer(class_sizes, np.asarray(cols, dtype=np.float64) / n)
    counts = np.floor(ideal + 1e-9).astype(int)
    frac = ideal - counts
    owed = class_sizes - counts.sum(axis=1)
    for j, total in enumerate(cols):
        need = total - counts[:, j].sum()
        order = sorted(range(len(class_sizes)), key=lambda c: (-owed[c], -frac[c, j], c))
        for c in order[:need]:
            if owed[c] <= 0:
                raise ConfigError("cannot allocate a stratified split with these fractions")
            counts[c, j] += 1
            owed[c] -= 1
    return counts[:, :len(totals)]


def split(dataset, fractions=DEFAULT_FRACTIONS, seed=0):
    """Stratified train/val/probe_fit/probe_eval split."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (4,) or np.any(fractions < 0) or fractions.sum() > 1 + 1e-9:
        raise ConfigError(f"split fractions must be 4 non-negative numbers summing to <= 1, got {fractions}")
    N, K = dataset.num_samples, dataset.num_classes
    totals = [int(math.floor(N * f + 1e-9)) for f in fractions]
    needed = int(np.count_nonzero(fractions))
    rng = np.random.default_rng(seed)
    per_class = []
    for c in range(K):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < needed:
            raise ConfigError(f"class {c} has {len(idx)} samples, fewer than the {needed} splits")
        per_class.append(rng.permutation(idx))
    counts = _split_counts(np.array([len(i) for i in per_class]), totals)
    parts = [[] for _ in range(4)]
    for c, idx in enumerate(per_class):
        start = 0
        for j in range(4):
            parts[j].append(idx[start:start + counts[c, j]])
            start += counts[c, j]
    return Splits(*(np.sort(np.concatenate(p)).astype(np.intp) for p in parts))


def batches(dataset, indices, batch_size, epoch_seed):
    """Yield ``(batch, labels)`` over a shuffled split; the last partial batch is kept."""
    if batch_size < 1:
        raise UsageError("batch_size must be >= 1")
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise UsageError("cannot batch an empty split")
    order = np.random.default_rng(epoch_seed).permutation(indices)
    for start in range(0, order.size, batch_size):
        yield dataset.take(order[start:start + batch_size])


# -- .mmds persistence ---------------------------------------------------------

def dumps(dataset):
    header = {
        "num_samples": dataset.num_samples,
        "num_classes": dataset.num_classes,
        "modalities": [{"name": n, "dim": d} for n, d in dataset.dims.items()],
        "label_dtype": "u16",
        "feature_dtype": "f32",
        "provenance": dataset.provenance,
    }
    if dataset.num_classes > 65536:
        raise ConfigError("u16 labels support at most 65536 classes")
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<IQ", VERSION, len(raw)), raw,
           dataset.labels.astype("<u2").tobytes()]
    for n in dataset.names:
        out.append(np.ascontiguousarray(dataset.features[n], dtype="<f4").tobytes())
    return b"".join(out)


def loads(buf):
    if len(buf) < 16:
        raise FormatError("file too short for MMDS preamble", len(buf))
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}", 0)
    version, hlen = struct.unpack("<IQ", buf[4:16])
    if version != VERSION:
        raise FormatError(f"unsupported MMDS version {version}", 4)
    off = 16
    if off + hlen > len(buf):
        raise FormatError(f"header claims {hlen} bytes but file ends", off)
    try:
        header = json.loads(bytes(buf[off:off + hlen]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}", off) from None
    for key in ("num_samples", "num_classes", "modalities"):
        if key not in header:
            raise FormatError(f"header missing {key!r}", off)
    if header.get("label_dtype", "u16") != "u16" or header.get("feature_dtype", "f32") != "f32":
        raise FormatError("only u16 labels and f32 features are supported", off)
    off += hlen
    N, K = int(header["num_samples"]), int(header["num_classes"])
    if off + 2 * N > len(buf):
        raise FormatError("truncated label block", off)
    labels = np.frombuffer(buf, dtype="<u2", count=N, offset=off).astype(np.int64)
    if N and labels.max() >= K:
        raise FormatError(f"label {labels.max()} outside [0, {K})", off)
    off += 2 * N
    feats = {}
    for m in header["modalities"]:
        d = int(m["dim"])
        if d < 1:
            raise FormatError(f"modality {m['name']!r} has non-positive dim {d}", off)
        nbytes = 4 * N * d
        if off + nbytes > len(buf):
            raise FormatError(f"truncated feature block for modality {m['name']!r}", off)
        feats[m["name"]] = np.frombuffer(buf, dtype="<f4", count=N * d, offset=off).astype(np.float64).reshape(N, d)
        off += nbytes
    if off != len(buf):
        raise FormatError("trailing bytes after last feature block", off)
    return Dataset(feats, labels, K, header.get("provenance", {}))


def save(dataset, path):
    with open(path, "wb") as fh:
        fh.write(dumps(dataset))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
