"""Dense float64 tensors with reverse-mode automatic differentiation.

Only what small multi-modal MLPs need: matmul, bias add, concat, scalar
scale, relu, maxout, log-softmax, weighted sums, and the batch-mean
true-class log-probability. No broadcasting beyond the bias add.
"""
from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import DimensionError, UsageError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def backward(self):
        backward(self)


def _make(data, parents, vjp):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), vjp)


def add(a, b):
    """Elementwise sum; ``b`` may also be a bias vector over the last axis of a 2-D ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: empty input")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis
        ):
            raise DimensionError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def scale(x, c):
    x = _as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def relu(x):
    x = _as_tensor(x)
    xd = x.data
    return _make(kernels.relu_forward(xd), (x,), lambda g: (kernels.relu_backward(g, xd),))


def log_softmax(x):
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"log_softmax expects [N, K], got {x.shape}")
    out = kernels.log_softmax_forward(x.data)
    return _make(out, (x,), lambda g: (kernels.log_softmax_backward(g, out),))


def maxout(pieces):
    """Elementwise maximum over a list of same-shape ``[N, D]`` tensors.

    The gradient flows to the winning piece only (lowest index on ties).
    """
    pieces = [_as_tensor(p) for p in pieces]
    if len(pieces) < 2:
        raise DimensionError("maxout needs at least two pieces")
    for p in pieces[1:]:
        if p.shape != pieces[0].shape:
            raise DimensionError(f"maxout: piece shapes differ: {pieces[0].shape} vs {p.shape}")
    stacked = np.stack([p.data for p in pieces])
    out, idx = kernels.maxout_forward(stacked)
    n = len(pieces)

    def vjp(g):
        return tuple(kernels.maxout_backward(g, idx, n))

    return _make(out, tuple(pieces), vjp)


def weighted_sum(tensors, weights):
    """``sum_i weights[i] * tensors[i]`` with constant weights, accumulated left to right."""
    tensors = [_as_tensor(t) for t in tensors]
    weights = [float(w) for w in weights]
    if len(tensors) != len(weights) or not tensors:
        raise DimensionError("weighted_sum: need one weight per tensor")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise DimensionError(f"weighted_sum: shapes differ: {tensors[0].shape} vs {t.shape}")
    out = weights[0] * tensors[0].data
    for w, t in zip(weights[1:], tensors[1:]):
        out = out + w * t.data

    def vjp(g):
        return tuple(w * g for w in weights)

    return _make(out, tuple(tensors), vjp)


def _check_labels(labels, n, k):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {n}")
    if n == 0:
        raise DimensionError("empty batch")
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError(f"label out of range [0, {k}): min={labels.min()}, max={labels.max()}")
    return labels.astype(np.intp)


def mean_true_class_logprob(logits, labels):
    """Scalar ``(1/N) sum_i log_softmax(logits_i)[y_i]``; always <= 0."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(f"expected [N, K] logits, got {logits.shape}")
    n, k = logits.shape
    labels = _check_labels(labels, n, k)
    lp = kernels.log_softmax_forward(logits.data)
    rows = np.arange(n)
    value = lp[rows, labels].sum() / n

    def vjp(g):
        grad = -np.exp(lp)
        grad[rows, labels] += 1.0
        return (grad * (float(g) / n),)

    return _make(np.asarray(value), (logits,), vjp)


def cross_entropy(logits, labels):
    return scale(mean_true_class_logprob(logits, labels), -1.0)


def inner(x, c):
    """Scalar ``sum(x * c)`` against a constant array of the same shape."""
    x = _as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise DimensionError(f"inner: shapes differ: {x.shape} vs {c.shape}")
    return _make(np.asarray(np.sum(x.data * c)), (x,), lambda g: (c * float(g),))


class Tape:
    """Topologically ordered record of the operations behind ``output``.

    Built by walking parent links from the output; only nodes that require
    gradients are recorded, and each appears after all of its parents.
    """

    def __init__(self, output):
        self.nodes = []
        seen = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.output = output

    def __len__(self):
        return len(self.nodes)

    def backward(self, seed):
        grads = {id(self.output): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def backward_vjp(output, seed_grad):
    """Accumulate ``seed_grad^T d(output)/d(leaf)`` into every leaf's ``.grad``."""
    if not isinstance(output, Tensor) or not output.requires_grad:
        raise UsageError("backward called on a tensor that is not attached to a graph")
    seed = np.asarray(seed_grad, dtype=np.float64)
    if seed.shape != output.shape:
        raise DimensionError(f"seed gradient shape {seed.shape} != output shape {output.shape}")
    Tape(output).backward(seed)


def backward(output):
    if not isinstance(output, Tensor) or not output.requires_grad:
        raise UsageError("backward called on a tensor that is not attached to a graph")
    if output.data.size != 1:
        raise UsageError(f"backward needs a scalar output, got shape {output.shape}; use backward_vjp")
    backward_vjp(output, np.ones(output.shape))
