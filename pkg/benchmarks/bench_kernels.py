"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--n 2000] [--alphabet 30] [--repeat 5]

Times each kernel on the same random inputs with both backends, checks that
the outputs agree, and prints one line per kernel with the speedup.  A final
line times a full traversal (``find_max_abs_inner``) with each backend.
"""

import argparse
import importlib
import time

import numpy as np

from spp import _pure
from spp.data import Dataset


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def random_dataset(rng, n, alphabet, max_size=12):
    structs = [tuple(rng.integers(0, alphabet, size=rng.integers(2, max_size)).tolist()) for _ in range(n)]
    return Dataset(tuple(structs), rng.normal(size=n), "sequence", "regression", alphabet)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--alphabet", type=int, default=30)
    ap.add_argument("--columns", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        core = importlib.import_module("spp._core")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    ds = random_dataset(rng, args.n, args.alphabet)
    rows = np.arange(ds.n, dtype=np.int64)
    pos = ds.indptr[:-1].copy()
    alpha = rng.normal(size=ds.n)
    cols = [np.sort(rng.choice(ds.n, size=rng.integers(1, ds.n // 4), replace=False)) for _ in range(args.columns)]
    col_ptr = np.zeros(len(cols) + 1, dtype=np.int64)
    np.cumsum([len(c) for c in cols], out=col_ptr[1:])
    col_rows = np.concatenate(cols).astype(np.int64)
    ylab = np.where(rng.random(ds.n) < 0.5, -1.0, 1.0)

    cases = {
        "project": lambda m: m.project(ds.indptr, ds.items, rows, pos, ds.alphabet_size),
        "support_sums": lambda m: m.support_sums(rows, alpha),
        "cd_sweep_squared": lambda m: m.cd_sweep_squared(col_ptr, col_rows, np.zeros(len(cols)), alpha.copy(), 5.0, 0.1),
        "cd_sweep_logistic": lambda m: m.cd_sweep_logistic(col_ptr, col_rows, np.zeros(len(cols)), np.zeros(ds.n), ylab, 5.0, 0.1),
    }
    print(f"{'kernel':<20}{'compiled [ms]':>15}{'pure [ms]':>12}{'speedup':>10}  agree")
    for name, call in cases.items():
        a, b = call(core), call(_pure)
        if isinstance(a, tuple):
            agree = all(np.allclose(x, y) for x, y in zip(a, b))
        else:
            agree = bool(np.allclose(a, b))
        tc = _best(lambda: call(core), args.repeat)
        tp = _best(lambda: call(_pure), args.repeat)
        print(f"{name:<20}{tc * 1e3:>15.3f}{tp * 1e3:>12.3f}{tp / tc:>10.1f}  {agree}")

    from spp import kernels, screening

    c = alpha - alpha.mean()
    timings = {}
    saved = {k: getattr(kernels, k) for k in ("project", "support_sums")}
    for label, mod in (("compiled", core), ("pure", _pure)):
        for k in saved:
            setattr(kernels, k, getattr(mod, k))
        timings[label] = _best(lambda: screening.find_max_abs_inner(ds, c, 3), max(1, args.repeat // 2))
    for k, v in saved.items():
        setattr(kernels, k, v)
    print(
        f"{'traversal (len<=3)':<20}{timings['compiled'] * 1e3:>15.3f}{timings['pure'] * 1e3:>12.3f}"
        f"{timings['pure'] / timings['compiled']:>10.1f}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
