import numpy as np

from modforge import models


def make_model(kind, dims=(5, 4), hidden=(6,), K=3, seed=0, fusion_hidden=7, pieces=2):
    names = ["a", "v", "t", "x"][:len(dims)]
    mods = [models.ModalitySpec(n, d, hidden) for n, d in zip(names, dims)]
    return models.build(mods, models.FusionSpec(kind, fusion_hidden, pieces), K, seed)


def make_batch(model, n, rng):
    return {m.name: rng.uniform(-2, 2, size=(n, m.input_dim)) for m in model.modalities}


def randomize(model, rng, scale=1.0):
    """Overwrite every parameter with U(-scale, scale) values (biases included)."""
    for p in model.params.values():
        p.data = rng.uniform(-scale, scale, size=p.shape)
    return model
