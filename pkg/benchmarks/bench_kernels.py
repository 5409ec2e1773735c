"""Time the compiled kernels against the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called with identical inputs on both backends; the outputs are checked for
bit-equality before any timing is reported.
"""
import argparse
import timeit

import numpy as np

from gridsindy import _pykernels
from gridsindy.library import LibrarySpec

try:
    from gridsindy import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases():
    rng = np.random.default_rng(0)

    spec = LibrarySpec.from_name("p2f1")
    kinds, exps = spec.kernel_encoding()
    coef = rng.standard_normal(len(spec.feature_names)) * 0.05
    yield "rk4_simulate (p2f1, 900 steps)", (
        coef, kinds, exps, 0.5, 0.0, 0.3, 0.02, 900, 50.0)

    n = 900 * 20
    yield "euler_maruyama (18000 steps)", (
        0.5, 0.2, 0.05, rng.standard_normal(n) * 0.1, rng.standard_normal(n), 0.0, 0.3, 1e-3)

    Z = rng.standard_normal((900, 20))
    y = Z[:, 1] - 0.5 * Z[:, 2] + 0.1 * rng.standard_normal(900)
    pen = np.ones(20, dtype=np.uint8)
    yield "lasso_cd (20 features)", (
        Z.T @ Z, Z.T @ y, 1.0, pen, np.zeros(20), 1e-10, 10000)

    p = 20
    A = rng.standard_normal((p, p)) * 0.05
    K = A @ A.T
    K /= 1.1 * np.linalg.eigvalsh(K).max()
    u = rng.standard_normal(p)
    pen[0] = 0
    for mode, norm in enumerate(["L0", "L1", "L2"]):
        yield f"sr3_loop ({norm}, 20 features)", (
            u, K, rng.standard_normal(p), mode, 0.05, pen, 1e-12, 2000)


def _same(a, b):
    for x, y in zip(a, b):
        if isinstance(x, np.ndarray):
            if not np.array_equal(x, y):
                return False
        elif x != y:
            return False
    return True


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")

    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>9s}")
    for label, inputs in _cases():
        name = label.split()[0]
        fast, slow = getattr(_kernels, name), getattr(_pykernels, name)
        if not _same(fast(*inputs), slow(*inputs)):
            raise SystemExit(f"{name}: backends disagree")
        t_py = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        print(f"{label:40s} {t_py * 1e3:12.2f} {t_cy * 1e3:12.3f} {t_py / t_cy:8.0f}x")


if __name__ == "__main__":
    main()
