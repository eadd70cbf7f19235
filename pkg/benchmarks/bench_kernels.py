"""Time the RBF layer kernels: compiled extension vs. numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-N wall time of one forward and one backward call for a
few batch shapes typical of training, plus the speed-up of the extension.
"""
import argparse
import timeit

import numpy as np

from ipnet import _rbf_py, kernels

try:
    from ipnet import _rbf_ext
except ImportError:
    _rbf_ext = None

SHAPES = [  # (N samples, D channels, U union times, R reference points)
    (32, 3, 90, 32),
    (32, 12, 200, 64),
    (256, 3, 300, 32),
]


def make_batch(N, D, U, R, seed=0):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.random((N, U)), axis=1)
    values = rng.normal(size=(N, D, U))
    mask = (rng.random((N, D, U)) < 0.4).astype(float)
    mask[:, :, 0] = 1.0
    refs = np.broadcast_to(np.linspace(0, 1, R), (N, R))
    alpha = np.full(D, 1.0 / (2 * (3.0 / (R - 1)) ** 2))
    g = rng.normal(size=(N, D, R))
    return (refs, times, values, mask, alpha), g


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = [("python", _rbf_py)] + ([("cython", _rbf_ext)] if _rbf_ext else [])
    if _rbf_ext is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'N,D,U,R':<16}{'impl':<8}{'forward ms':>12}{'backward ms':>13}")
    for shape in SHAPES:
        args_, g = make_batch(*shape)
        times = {}
        for name, impl in impls:
            f = best(lambda: kernels.rbf_forward(*args_, impl=impl), args.repeat)
            b = best(lambda: kernels.rbf_backward(*args_, g, g, impl=impl), args.repeat)
            times[name] = (f, b)
            print(f"{','.join(map(str, shape)):<16}{name:<8}{f * 1e3:>12.2f}{b * 1e3:>13.2f}")
        if len(times) == 2:
            (pf, pb), (cf, cb) = times["python"], times["cython"]
            print(f"{'':<16}{'speedup':<8}{pf / cf:>11.1f}x{pb / cb:>12.1f}x")


if __name__ == "__main__":
    main()
