"""Mono-modal concepts: single-modality reference models trained without competition.

Late fusion: the modality's branch (encoder + head) trained alone.
Early fusion: the whole architecture trained with every other modality
replaced by zeros (or fresh N(0, 1) noise, as a control). Early-fusion
concepts are always *evaluated* with zero padding.
"""
from dataclasses import dataclass, field

import numpy as np

from .agm import train_plain
from .data import Dataset
from .errors import ConfigError
from .models import EARLY_MAXOUT, LATE_SUM, FusionSpec, MultiModalModel, build
from .optim import SgdConfig
from .tensor import no_grad

LATE_BRANCH = "late_branch"
EARLY_ZERO = "early_zero"
EARLY_RANDOM = "early_random"
PADDINGS = {"zero": EARLY_ZERO, "random": EARLY_RANDOM}


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer, epoch budget, batch size and seed shared by a run and its concepts."""

    opt: SgdConfig = field(default_factory=SgdConfig)
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0

    def to_dict(self):
        return {"opt": self.opt.to_dict(), "epochs": self.epochs,
                "batch_size": self.batch_size, "seed": self.seed}


@dataclass
class ConceptModel:
    modality: str
    context: str
    model: MultiModalModel
    num_classes: int
    env: dict = field(default_factory=dict)

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        with no_grad():
            if self.context == LATE_BRANCH:
                return self.model.branch_logits(self.modality, x).data
            return self.model.forward_masked({self.modality: x}, {self.modality}).data

    @property
    def filename(self):
        return f"concept_{self.modality}_{self.context}.mmf"

    def save(self, path):
        self.model.save(path)


def train_concept_late(modality, dataset, indices, settings, num_classes=None, paired=None):
    """Train the branch for ``modality`` on that modality's features only."""
    if paired is not None:
        if paired.kind != LATE_SUM:
            raise ConfigError("late-branch concepts pair with late-fusion models only")
        if paired.spec(modality.name) != modality:
            raise ConfigError(f"encoder spec for {modality.name!r} differs from the paired model's branch")
        num_classes = paired.num_classes
    if num_classes is None:
        raise ConfigError("num_classes is required without a paired model")
    if modality.name not in dataset.features:
        raise ConfigError(f"dataset has no modality {modality.name!r}")
    model = build([modality], FusionSpec(LATE_SUM), num_classes, settings.seed)
    mono = _only(dataset, modality.name)
    train_plain(model, mono, indices, settings.opt, settings.epochs, settings.batch_size, settings.seed)
    return ConceptModel(modality.name, LATE_BRANCH, model, num_classes,
                        {"train": settings.to_dict(), "padding": None})


def _only(dataset, name):
    return Dataset({name: dataset.features[name]}, dataset.labels, dataset.num_classes,
                   dataset.provenance)


def train_concept_early(modality, paired, dataset, indices, settings, padding="zero"):
    """Train the full early-fusion architecture on ``(x^m, pad, ..., pad)`` samples."""
    if paired.kind != EARLY_MAXOUT:
        raise ConfigError("padded concepts pair with early-fusion models only")
    if padding not in PADDINGS:
        raise ConfigError(f"padding must be 'zero' or 'random', got {padding!r}")
    paired.spec(modality)
    if modality not in dataset.features:
        raise ConfigError(f"dataset has no modality {modality!r}")
    arch = paired.to_dict()
    arch["seed"] = settings.seed
    model = MultiModalModel.from_dict(arch)
    others = [m for m in model.modalities if m.name != modality]

    # other modalities' real features are never read
    if padding == "zero":
        def transform(batch, rng):
            n = batch[modality].shape[0]
            out = {modality: batch[modality]}
            out.update({m.name: np.zeros((n, m.input_dim)) for m in others})
            return out
    else:
        def transform(batch, rng):
            n = batch[modality].shape[0]
            out = {modality: batch[modality]}
            out.update({m.name: rng.standard_normal((n, m.input_dim)) for m in others})
            return out

    mono = _only(dataset, modality)
    train_plain(model, mono, indices, settings.opt, settings.epochs, settings.batch_size,
                settings.seed, transform=transform)
    return ConceptModel(modality, PADDINGS[padding], model, paired.num_classes,
                        {"train": settings.to_dict(), "padding": padding})


def train_concepts(paired, dataset, indices, settings, padding="zero"):
    """One concept per modality of ``paired``, matched to its fusion kind."""
    if paired.kind == LATE_SUM:
        return {m.name: train_concept_late(m, dataset, indices, settings, paired=paired)
                for m in paired.modalities}
    return {m: train_concept_early(m, paired, dataset, indices, settings, padding) for m in paired.names}


def concept_eval(concept, dataset, indices):
    if concept.modality not in dataset.features:
        raise ConfigError(f"dataset has no modality {concept.modality!r}")
    idx = np.asarray(indices, dtype=np.intp)
    logits = concept.predict(dataset.features[concept.modality][idx])
    acc = float(np.mean(np.argmax(logits, axis=1) == dataset.labels[idx]))
    return {"logits": logits, "accuracy": acc}
