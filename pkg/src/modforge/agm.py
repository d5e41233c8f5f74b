"""Adaptive gradient modulation training loop.

Each iteration scores every modality by the batch-mean true-class
log-probability of its Shapley-attributed logits, turns the scores into
discrepancy ratios, compares them with ratios built from the running mean
of past scores, and scales each modality's backward signal by
``kappa = exp(-alpha * (r - tau))``.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .errors import ConfigError, NumericError, UsageError
from .optim import SGD, SgdConfig
from .shapley import mono_modal_accuracy, mono_modal_outputs_auto, mono_modal_score
from .tensor import backward, backward_vjp, cross_entropy, mean_true_class_logprob, no_grad, weighted_sum

KAPPA_EXPONENT_CLAMP = 50.0
# keeps r and tau finite so r - tau is never inf - inf
RATIO_EXPONENT_CLAMP = 50.0


class TrainMethod(str, enum.Enum):
    JOINT = "joint"
    AGM = "agm"
    AGM_TO_ONE = "agm1"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"joint": cls.JOINT, "joint_train": cls.JOINT, "agm": cls.AGM,
                   "agm1": cls.AGM_TO_ONE, "agm_to_one": cls.AGM_TO_ONE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigError(f"unknown method {value!r}; expected one of joint, agm, agm1") from None


@dataclass
class AgmState:
    names: list
    running_avg: np.ndarray
    t: int = 0
    alpha: float = 1.0

    @classmethod
    def fresh(cls, names, alpha=1.0):
        if alpha < 0:
            raise ConfigError(f"alpha must be non-negative, got {alpha}")
        return cls(list(names), np.zeros(len(names)), 0, float(alpha))


def discrepancy_ratios(s):
    """``r^m = exp((s^m - mean(s)) * k / (k - 1))``."""
    s = np.asarray(s, dtype=np.float64)
    k = s.size
    if k < 2:
        raise UsageError("discrepancy ratios need at least two modalities")
    if not np.all(np.isfinite(s)):
        raise NumericError(f"non-finite mono-modal scores {s}")
    arg = (s - s.mean()) * k / (k - 1)
    return np.exp(np.clip(arg, -RATIO_EXPONENT_CLAMP, RATIO_EXPONENT_CLAMP))


def discrepancy_ratios_pairwise(s):
    """Same quantity as :func:`discrepancy_ratios`, via the explicit pairwise-gap average."""
    s = np.asarray(s, dtype=np.float64)
    k = s.size
    if k < 2:
        raise UsageError("discrepancy ratios need at least two modalities")
    return np.array([np.exp(sum(s[m] - s[o] for o in range(k) if o != m) / (k - 1)) for m in range(k)])


def reference_ratios(state):
    return discrepancy_ratios(state.running_avg)


def modulation_coefficients(r, tau, alpha):
    if alpha < 0:
        raise ConfigError(f"alpha must be non-negative, got {alpha}")
    arg = -alpha * (np.asarray(r, dtype=np.float64) - np.asarray(tau, dtype=np.float64))
    return np.exp(np.clip(arg, -KAPPA_EXPONENT_CLAMP, KAPPA_EXPONENT_CLAMP))


def update_running_average(state, s):
    """Absorb one batch of scores; ``state.t`` counts batches absorbed so far."""
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise NumericError(f"non-finite mono-modal scores {s}")
    t = state.t
    state.running_avg = state.running_avg * t / (t + 1) + s / (t + 1)
    state.t = t + 1
    return state


def softmax_ce_grad(logits, labels):
    """d/dlogits of the batch-mean cross-entropy."""
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(labels)), labels] -= 1.0
    return p / len(labels)


def coefficients_for(method, s, state):
    """(r, tau, kappa) for one iteration, honouring the method's overrides."""
    k = len(s)
    if k == 1:
        one = np.ones(1)
        return one, one, one
    r = discrepancy_ratios(s)
    tau = np.ones(k) if method is TrainMethod.AGM_TO_ONE else reference_ratios(state)
    if method is TrainMethod.JOINT:
        kappa = np.ones(k)
    else:
        kappa = modulation_coefficients(r, tau, state.alpha)
    return r, tau, kappa


def accumulate_modulated_gradient(model, outputs, labels, kappa):
    """Add ``dL/dphi . sum_m kappa^m dphi^m/dtheta`` to the parameter grads.

    ``dL/dphi`` is taken at the full output; kappa is a constant.
    """
    g = softmax_ce_grad(outputs.full.data, labels)
    combined = weighted_sum([outputs[m] for m in model.names], kappa)
    backward_vjp(combined, g)


def modulated_step(model, batch, labels, state, method, optimizer):
    method = TrainMethod.parse(method)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise UsageError("empty batch")
    names = model.names
    outputs = mono_modal_outputs_auto(model, batch)
    with no_grad():
        loss = -float(mean_true_class_logprob(outputs.full.data, labels).data)
    s = np.array([mono_modal_score(outputs[m], labels) for m in names])
    if not np.isfinite(loss) or not np.all(np.isfinite(s)):
        raise NumericError(f"non-finite loss or mono-modal score at iteration {state.t}")
    r, tau, kappa = coefficients_for(method, s, state)
    model.zero_grad()
    accumulate_modulated_gradient(model, outputs, labels, kappa)
    try:
        optimizer.step()
    except NumericError as exc:
        raise NumericError(f"{exc} at iteration {state.t}") from None
    update_running_average(state, s)
    diag = {
        "loss": loss,
        "acc": mono_modal_accuracy(outputs.full, labels),
        "acc_m": {m: mono_modal_accuracy(outputs[m], labels) for m in names},
        "s": dict(zip(names, s.tolist())),
        "r": dict(zip(names, r.tolist())),
        "tau": dict(zip(names, tau.tolist())),
        "kappa": dict(zip(names, kappa.tolist())),
    }
    return loss, diag


def evaluate(model, dataset, indices):
    """Loss, accuracy and per-modality accuracy/score on a split, without recording a graph."""
    batch, labels = dataset.take(indices)
    with no_grad():
        outputs = mono_modal_outputs_auto(model, batch)
        loss = -float(mean_true_class_logprob(outputs.full.data, labels).data)
    return {
        "loss": loss,
        "acc": mono_modal_accuracy(outputs.full, labels),
        "acc_m": {m: mono_modal_accuracy(outputs[m], labels) for m in model.names},
        "s": {m: mono_modal_score(outputs[m], labels) for m in model.names},
    }


def history_row(epoch, split, names, metrics):
    row = {"epoch": epoch, "split": split, "loss": metrics["loss"], "acc": metrics["acc"]}
    for m in names:
        row[f"acc_{m}"] = metrics["acc_m"][m]
        row[f"s_{m}"] = metrics["s"][m]
        for key in ("r", "tau", "kappa"):
            row[f"{key}_{m}"] = metrics.get(key, {}).get(m)
    return row


@dataclass
class TrainedRun:
    model: object
    method: TrainMethod
    state: AgmState
    history: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    def final(self, split="val"):
        rows = [r for r in self.history if r["split"] == split]
        return rows[-1] if rows else None


def epoch_seed(seed, epoch):
    return [int(seed), int(epoch)]


def train(model, dataset, splits, method, epochs, alpha=1.0, opt_cfg=None, seed=0,
          batch_size=64, epoch_callback=None, record_iterations=False, row_sink=None):
    """Run ``epochs`` passes of :func:`modulated_step` over ``splits.train``.

    After every epoch a ``train`` row (means of the per-batch diagnostics)
    and a ``val`` row are appended to the history. ``epoch_callback(epoch,
    model)`` may return extra columns for the val row. ``row_sink(row)`` is
    called with every row as soon as it exists.
    """
    method = TrainMethod.parse(method)
    opt_cfg = opt_cfg or SgdConfig()
    optimizer = SGD(model.params, opt_cfg)
    state = AgmState.fresh(model.names, alpha)
    run = TrainedRun(model, method, state)
    names = model.names
    for epoch in range(epochs):
        optimizer.set_epoch(epoch)
        diags = []
        for batch, labels in data_mod.batches(dataset, splits.train, batch_size, epoch_seed(seed, epoch)):
            _, diag = modulated_step(model, batch, labels, state, method, optimizer)
            diags.append(diag)
            if record_iterations:
                run.iterations.append(diag)
        agg = {
            "loss": float(np.mean([d["loss"] for d in diags])),
            "acc": float(np.mean([d["acc"] for d in diags])),
        }
        for key in ("acc_m", "s", "r", "tau", "kappa"):
            agg[key] = {m: float(np.mean([d[key][m] for d in diags])) for m in names}
        rows = [history_row(epoch, "train", names, agg)]
        val_row = history_row(epoch, "val", names, evaluate(model, dataset, splits.val))
        if epoch_callback is not None:
            val_row.update(epoch_callback(epoch, model) or {})
        rows.append(val_row)
        for row in rows:
            run.history.append(row)
            if row_sink is not None:
                row_sink(row)
    return run


def train_plain(model, dataset, indices, opt_cfg=None, epochs=1, batch_size=64, seed=0, transform=None):
    """Ordinary cross-entropy training on ``model.forward_full``.

    ``transform(batch, rng)`` may rewrite each batch before the forward pass;
    ``rng`` is a generator seeded per epoch from ``seed``.
    """
    opt_cfg = opt_cfg or SgdConfig()
    optimizer = SGD(model.params, opt_cfg)
    for epoch in range(epochs):
        optimizer.set_epoch(epoch)
        rng = np.random.default_rng([int(seed), int(epoch), 1])
        for batch, labels in data_mod.batches(dataset, indices, batch_size, epoch_seed(seed, epoch)):
            if transform is not None:
                batch = transform(batch, rng)
            model.zero_grad()
            loss = cross_entropy(model.forward_full(batch), labels)
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss in epoch {epoch}")
            backward(loss)
            optimizer.step()
    return model
