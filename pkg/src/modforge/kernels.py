"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built and imports
cleanly; otherwise the numpy implementations in ``_pykernels`` are used.
Set ``MODFORGE_NO_EXT=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "numpy"
_impl = _pykernels

if os.environ.get("MODFORGE_NO_EXT") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def maxout_forward(pieces):
    return _impl.maxout_forward(_c(pieces))


def maxout_backward(grad, idx, n_pieces):
    if _impl is _pykernels:
        return _impl.maxout_backward(grad, idx, n_pieces)
    return _impl.maxout_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.intp), n_pieces)


# numpy's vectorized exp/log beats the compiled loop here (see
# benchmarks/bench_kernels.py), so log-softmax stays on numpy for both backends.
def log_softmax_forward(x):
    return _pykernels.log_softmax_forward(_c(x))


def log_softmax_backward(grad, out):
    return _pykernels.log_softmax_backward(_c(grad), _c(out))


def relu_forward(x):
    if x.ndim != 2:
        return _pykernels.relu_forward(x)
    return _impl.relu_forward(_c(x))


def relu_backward(grad, x):
    if x.ndim != 2:
        return _pykernels.relu_backward(grad, x)
    return _impl.relu_backward(_c(grad), _c(x))
