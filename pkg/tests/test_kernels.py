import importlib

import numpy as np
import pytest

from modforge import _pykernels, kernels

try:
    from modforge import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


@needs_ext
@pytest.mark.parametrize("shape", [(2, 1, 1), (2, 64, 32), (3, 17, 5)])
def test_maxout_backends_agree(shape, rng):
    x = rng.normal(size=shape)
    out_c, idx_c = _ckernels.maxout_forward(x)
    out_p, idx_p = _pykernels.maxout_forward(x)
    np.testing.assert_array_equal(out_c, out_p)
    np.testing.assert_array_equal(idx_c, idx_p)
    g = rng.normal(size=shape[1:])
    np.testing.assert_array_equal(_ckernels.maxout_backward(g, idx_c, shape[0]),
                                  _pykernels.maxout_backward(g, idx_p, shape[0]))


@needs_ext
def test_maxout_ties_pick_lowest_piece():
    x = np.zeros((3, 2, 2))
    _, idx = _ckernels.maxout_forward(x)
    assert np.all(idx == 0)
    _, idx = _pykernels.maxout_forward(x)
    assert np.all(idx == 0)


@needs_ext
def test_log_softmax_backends_agree(rng):
    x = rng.normal(scale=10, size=(64, 7))
    out_c = _ckernels.log_softmax_forward(x)
    out_p = _pykernels.log_softmax_forward(x)
    np.testing.assert_allclose(out_c, out_p, rtol=0, atol=1e-12)
    g = rng.normal(size=x.shape)
    np.testing.assert_allclose(_ckernels.log_softmax_backward(g, out_c),
                               _pykernels.log_softmax_backward(g, out_p), rtol=0, atol=1e-12)


@needs_ext
def test_relu_backends_agree(rng):
    x = rng.normal(size=(10, 9))
    g = rng.normal(size=x.shape)
    np.testing.assert_array_equal(_ckernels.relu_forward(x), _pykernels.relu_forward(x))
    np.testing.assert_array_equal(_ckernels.relu_backward(g, x), _pykernels.relu_backward(g, x))


def test_env_var_forces_numpy_backend(monkeypatch):
    monkeypatch.setenv("MODFORGE_NO_EXT", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("MODFORGE_NO_EXT")
        importlib.reload(kernels)


def test_dispatch_accepts_non_contiguous(rng):
    x = rng.normal(size=(8, 6))[:, ::2]
    np.testing.assert_allclose(kernels.log_softmax_forward(x), _pykernels.log_softmax_forward(x), atol=1e-12)
