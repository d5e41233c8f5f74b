"""Per-modality logit attribution by exact Shapley enumeration over modality coalitions.

A coalition is the set of modalities that are *present*; absent ones are
masked by the model (zero inputs for early fusion, dropped branches for late
fusion). The empty coalition is taken to output 0, which makes the
per-modality responses sum exactly to the full model output.
"""
import itertools
import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import UsageError
from .models import LATE_SUM
from .tensor import Tensor, mean_true_class_logprob, no_grad, weighted_sum


@dataclass
class MonoModalOutputs:
    per_modality: dict  # name -> Tensor [N, K]
    full: object        # Tensor [N, K]

    def __getitem__(self, name):
        return self.per_modality[name]

    def sum_residual(self):
        total = sum(t.data for t in self.per_modality.values())
        return float(np.max(np.abs(total - self.full.data)))


def shapley_weight(size, k):
    return factorial(size) * factorial(k - size - 1) / factorial(k)


def coalitions(names):
    """All non-empty subsets of ``names`` in bitmask order, as frozensets."""
    k = len(names)
    return [frozenset(n for i, n in enumerate(names) if mask >> i & 1) for mask in range(1, 1 << k)]


def coalition_coefficients(names):
    """Coefficients ``c[m][S]`` with ``phi^m = sum_S c[m][S] * phi(S)``.

    Collects the marginal-contribution terms ``w(|S|) * (phi(S+m) - phi(S))``
    for every ``S`` not containing ``m``; the ``phi(empty)`` term vanishes.
    """
    k = len(names)
    coeffs = {m: {} for m in names}
    for m in names:
        others = [n for n in names if n != m]
        for size in range(k):
            w = shapley_weight(size, k)
            for rest in itertools.combinations(others, size):
                S = frozenset(rest)
                with_m = S | {m}
                coeffs[m][with_m] = coeffs[m].get(with_m, 0.0) + w
                if S:
                    coeffs[m][S] = coeffs[m].get(S, 0.0) - w
    return coeffs


def masked_outputs(model, batch):
    """phi(S) for every non-empty coalition; exactly 2^k - 1 forward passes."""
    return {S: model.forward_masked(batch, S) for S in coalitions(model.names)}


def combine(model_names, outs):
    """Build each phi^m as a constant-weight sum of the coalition outputs."""
    coeffs = coalition_coefficients(model_names)
    order = list(outs)
    per = {}
    for m in model_names:
        used = [S for S in order if coeffs[m].get(S, 0.0) != 0.0]
        per[m] = weighted_sum([outs[S] for S in used], [coeffs[m][S] for S in used])
    return per


def mono_modal_outputs(model, batch):
    names = model.names
    k = len(names)
    if k == 1:
        full = model.forward_full(batch)
        return MonoModalOutputs({names[0]: full}, full)
    if k > 4:
        warnings.warn(f"exact Shapley enumeration over {k} modalities costs {2 ** k - 1} forward passes",
                      RuntimeWarning, stacklevel=2)
    outs = masked_outputs(model, batch)
    return MonoModalOutputs(combine(names, outs), outs[frozenset(names)])


def mono_modal_outputs_late_fast(model, batch):
    """Late-fusion shortcut: each branch's logits are its mono-modal response."""
    if model.kind != LATE_SUM:
        raise UsageError("the fast path needs a late-fusion (summed logits) model")
    per = {m: model.branch_logits(m, model._input(batch, m)) for m in model.names}
    full = None
    for m in model.names:
        full = per[m] if full is None else full + per[m]
    return MonoModalOutputs(per, full)


def mono_modal_outputs_auto(model, batch):
    if model.kind == LATE_SUM:
        return mono_modal_outputs_late_fast(model, batch)
    return mono_modal_outputs(model, batch)


def mono_modal_score(phi_m, labels):
    """Batch-mean log-probability of the true class under softmax(phi_m); <= 0."""
    data = phi_m.data if isinstance(phi_m, Tensor) else np.asarray(phi_m, dtype=np.float64)
    with no_grad():
        return float(mean_true_class_logprob(data, labels).data)


def mono_modal_accuracy(phi_m, labels):
    data = phi_m.data if isinstance(phi_m, Tensor) else np.asarray(phi_m)
    return float(np.mean(np.argmax(data, axis=1) == np.asarray(labels)))
