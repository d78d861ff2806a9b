"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 64] [--steps 1000]

Prints best-of-``repeat`` wall time per kernel and frame, the speedup, and the
largest absolute difference between the two backends' outputs.
"""

import argparse
import timeit

import numpy as np

from srotlab import kernels
from srotlab.frames import CATALOG_NAMES, catalog


def cases(frame, batch, steps, rng):
    X0 = rng.uniform(-1, 1, size=(batch, frame.n))
    P0 = rng.uniform(-1, 1, size=(batch, frame.n))
    U = rng.uniform(-1, 1, size=(steps + 1, frame.m))
    return {
        "ham_endpoints": lambda b: kernels.ham_endpoints(frame, X0, P0, steps, backend=b),
        "ham_trajectory": lambda b: kernels.ham_trajectory(frame, X0[0], P0[0], steps, backend=b),
        "controlled_flow": lambda b: kernels.controlled_flow(frame, X0[0], U, P0[0], want_phi=True, backend=b),
    }


def _flat(out):
    parts = out if isinstance(out, tuple) else (out,)
    return np.concatenate([np.ravel(np.asarray(p, dtype=float)) for p in parts if isinstance(p, np.ndarray)])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--steps", type=int, default=1000)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled extension not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'frame':<20}{'kernel':<18}{'compiled ms':>12}{'python ms':>12}{'speedup':>9}{'max diff':>11}")
    for name in CATALOG_NAMES:
        frame = catalog(name)
        for kname, fn in cases(frame, args.batch, args.steps, rng).items():
            t = {}
            for b in ("compiled", "python"):
                t[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
            diff = float(np.nanmax(np.abs(_flat(fn("compiled")) - _flat(fn("python")))))
            print(f"{name:<20}{kname:<18}{t['compiled']:>12.2f}{t['python']:>12.2f}{t['python'] / t['compiled']:>8.1f}x{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
