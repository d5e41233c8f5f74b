"""SGD with momentum, L2 weight decay and step learning-rate decay."""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_factor: float = 0.9
    lr_decay_every: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError(f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}")
        if int(self.lr_decay_every) != self.lr_decay_every or self.lr_decay_every < 1:
            raise ConfigError(f"lr_decay_every must be a positive integer, got {self.lr_decay_every}")

    def lr_at(self, epoch):
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def to_dict(self):
        return asdict(self)


def sgd_step(params, grads, velocity, cfg, lr=None):
    """One in-place momentum step over aligned dicts of arrays.

    ``v <- momentum * v + grad + weight_decay * param``; ``param <- param - lr * v``.
    Missing velocity entries are created. Returns ``(params, velocity)``.
    """
    lr = cfg.learning_rate if lr is None else lr
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= cfg.momentum
        v += g
        if cfg.weight_decay:
            v += cfg.weight_decay * p
        p -= lr * v
    return params, velocity


class SGD:
    """Stateful wrapper around :func:`sgd_step` for a dict of parameter tensors."""

    def __init__(self, params, cfg):
        self.params = params
        self.cfg = cfg
        self.velocity = {}
        self.epoch = 0

    @property
    def lr(self):
        return self.cfg.lr_at(self.epoch)

    def set_epoch(self, epoch):
        self.epoch = epoch

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        arrays = {n: p.data for n, p in self.params.items()}
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        sgd_step(arrays, grads, self.velocity, self.cfg, lr=self.lr)

