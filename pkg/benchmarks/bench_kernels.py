"""Compare the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--skip-e2e]

Prints per-kernel timings at a training-batch size and a larger size, the
maximum disagreement between backends, and the wall time of a short
early-fusion AGM training run under each backend (each in a subprocess so
the backend is chosen at import, as in normal use).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from modforge import _pykernels

try:
    from modforge import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import time
from modforge import agm, data, kernels, models
from modforge.optim import SgdConfig
ds = data.generate(data.benchmark("imbalanced", 0))
sp = data.split(ds, seed=0)
m = models.build([models.ModalitySpec(n, d, (32,)) for n, d in ds.dims.items()],
                 models.FusionSpec("early_maxout", 32, 2), 4, 0)
t0 = time.perf_counter()
agm.train(m, ds, sp, "agm", 5, alpha=4.0, opt_cfg=SgdConfig(learning_rate=0.0005))
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def cases(n, d, pieces=2, seed=0):
    rng = np.random.default_rng(seed)
    stacked = rng.standard_normal((pieces, n, d))
    x = rng.standard_normal((n, d))
    g = rng.standard_normal((n, d))
    _, idx = _pykernels.maxout_forward(stacked)
    ls = _pykernels.log_softmax_forward(x)
    return {
        "maxout_forward": lambda k: k.maxout_forward(stacked),
        "maxout_backward": lambda k: k.maxout_backward(g, idx, pieces),
        "log_softmax_forward": lambda k: k.log_softmax_forward(x),
        "log_softmax_backward": lambda k: k.log_softmax_backward(g, ls),
        "relu_forward": lambda k: k.relu_forward(x),
        "relu_backward": lambda k: k.relu_backward(g, x),
    }


def max_gap(a, b):
    if isinstance(a, tuple):
        return max(max_gap(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def bench(repeat):
    print(f"{'kernel':<22}{'shape':>12}{'numpy us':>11}{'cython us':>11}{'speedup':>9}{'max gap':>10}")
    for n, d in ((64, 32), (1024, 256)):
        for name, call in cases(n, d).items():
            t_np = min(timeit.repeat(lambda: call(_pykernels), number=200, repeat=repeat)) / 200 * 1e6
            if _ckernels is None:
                print(f"{name:<22}{f'{n}x{d}':>12}{t_np:>11.1f}{'-':>11}")
                continue
            t_c = min(timeit.repeat(lambda: call(_ckernels), number=200, repeat=repeat)) / 200 * 1e6
            gap = max_gap(call(_pykernels), call(_ckernels))
            print(f"{name:<22}{f'{n}x{d}':>12}{t_np:>11.1f}{t_c:>11.1f}{t_np / t_c:>8.2f}x{gap:>10.1e}")


def end_to_end():
    for flag in ("0", "1"):
        env = dict(os.environ, MODFORGE_NO_EXT=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"5-epoch early-fusion AGM run, {backend:>6} backend: {float(secs):.2f}s")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-e2e", action="store_true")
    args = p.parse_args()
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    bench(args.repeat)
    if not args.skip_e2e:
        end_to_end()


if __name__ == "__main__":
    main()
