"""Compiled vs numpy RBF kernels on the shapes the engines actually use.

    python benchmarks/bench_kernels.py [--repeat 5]

``rbf_row`` is the SVM's kernel-row fetch (one query against the support
set); ``rbf_scores`` is a sift phase (a node's slice against the frozen
model). Prints the best-of-N time per call for each backend and the ratio.
"""
import argparse
import timeit

import numpy as np

from paractive import _pykernels

try:
    from paractive import _ckernels
except ImportError:  # extension not built
    _ckernels = None

CASES = [
    # name, queries, support vectors, dim
    ("row   sv=500   d=2", 1, 500, 2),
    ("row   sv=2000  d=784", 1, 2000, 784),
    ("sift  q=62   sv=1000 d=784", 62, 1000, 784),
    ("sift  q=640  sv=2000 d=2", 640, 2000, 2),
    ("sift  q=3968 sv=300  d=10", 3968, 300, 10),
]


def bench(impl, nq, ns, dim, repeat):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(ns, dim))
    Q = rng.normal(size=(nq, dim))
    beta = rng.normal(size=ns)
    if nq == 1:
        fn = lambda: impl.rbf_row(Q[0], X, 0.012)
    else:
        fn = lambda: impl.rbf_scores(Q, X, beta, 0.012, 0.0)
    number = max(1, int(2e7 // (nq * ns * dim)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled core not built; only the numpy backend is timed")
    print(f"{'case':28s} {'numpy':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, nq, ns, dim in CASES:
        t_py = bench(_pykernels, nq, ns, dim, args.repeat)
        if _ckernels is None:
            print(f"{name:28s} {t_py * 1e6:10.1f}us")
            continue
        t_c = bench(_ckernels, nq, ns, dim, args.repeat)
        print(f"{name:28s} {t_py * 1e6:10.1f}us {t_c * 1e6:10.1f}us {t_py / t_c:7.2f}x")


if __name__ == "__main__":
    main()
