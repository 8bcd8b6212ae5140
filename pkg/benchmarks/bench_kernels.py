"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--quick]

Prints one line per kernel and backend with the best wall time over the
repeats, and the speed-up of the compiled path.
"""
import argparse
import time

import numpy as np

from cadence._kernels import backends


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def smo_case(n, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-0.7, 1.0, (n // 2, 10)), rng.normal(0.7, 1.0, (n - n // 2, 10))])
    y = np.r_[-np.ones(n // 2), np.ones(n - n // 2)]
    d2 = np.sum(X * X, 1)[:, None] + np.sum(X * X, 1)[None, :] - 2 * X @ X.T
    return np.exp(-0.1 * d2), y


def lstm_case(B, T, E, H, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((B, T, E))
    M = (rng.random((B, T)) < 0.8).astype(float)
    W = rng.standard_normal((4 * H, E)) * 0.2
    U = rng.standard_normal((4 * H, H)) * 0.2
    b = rng.standard_normal(4 * H) * 0.1
    return X, M, W, U, b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    found = backends()
    n_svm = 200 if args.quick else 600
    B, T = (16, 20) if args.quick else (64, 20)
    K, y = smo_case(n_svm)
    X, M, W, U, b = lstm_case(B, T, 50, 4)
    dh = np.ones((B, 4))
    results = {}
    for name, ns in sorted(found.items()):
        results[("smo", name)] = _best(lambda: ns.smo_solve(K, y, 1.0, 1e-3, 100000, False), args.repeat)
        results[("lstm_fwd", name)] = _best(lambda: ns.lstm_forward(X, M, W, U, b), args.repeat)
        Hs, Cs, G = ns.lstm_forward(X, M, W, U, b)
        results[("lstm_bwd", name)] = _best(lambda: ns.lstm_backward(X, M, W, U, Hs, Cs, G, dh), args.repeat)
    print(f"{'kernel':10s} {'backend':8s} {'seconds':>10s} {'speed-up':>9s}")
    for kernel in ("smo", "lstm_fwd", "lstm_bwd"):
        base = results[(kernel, "python")]
        for name in sorted(found):
            t = results[(kernel, name)]
            print(f"{kernel:10s} {name:8s} {t:10.5f} {base / t:8.1f}x")
    if "cython" not in found:
        print("compiled backend not built; only the numpy path was timed")


if __name__ == "__main__":
    main()
