"""Pure-numpy reference kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature.
The two are checked against each other in ``tests/test_kernels.py``.
"""
import numpy as np


def maxout_forward(pieces):
    """Elementwise max over axis 0 of a ``[P, N, D]`` stack.

    Returns the maximum and the winning piece index (lowest index on ties).
    """
    idx = np.argmax(pieces, axis=0)
    out = np.take_along_axis(pieces, idx[None], axis=0)[0]
    return out, idx


def maxout_backward(grad, idx, n_pieces):
    out = np.zeros((n_pieces,) + grad.shape)
    np.put_along_axis(out, idx[None], grad[None], axis=0)
    return out


def log_softmax_forward(x):
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def log_softmax_backward(grad, out):
    return grad - np.exp(out) * grad.sum(axis=1, keepdims=True)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, x):
    return np.where(x > 0.0, grad, 0.0)
