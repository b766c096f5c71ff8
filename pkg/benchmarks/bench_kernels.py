"""Compiled vs pure-Python sampling kernels.

    python3 benchmarks/bench_kernels.py [--n 20000] [--model A|A_prime|B|D]

Times the backward sampler, the forward sampler and raw path generation on
both backends and checks that their outputs are identical.
"""
import argparse
import time

import numpy as np

from mmtail import fixtures, kernels, rng


def timed(fn, repeat=3):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000, help="samples per kernel call")
    ap.add_argument("--model", default="A", choices=sorted(fixtures.ALL))
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        raise SystemExit("compiled kernels not built; run pip install -e . --no-build-isolation")
    table = fixtures.ALL[args.model]().outcome_table
    n = args.n
    cases = {
        "backward": lambda b: kernels.backward(
            table, 0, rng.stream_base(1, rng.PURPOSE_BACKWARD, 0), 0, n, 1e-12, 64, 10_000, backend=b)["R"],
        "forward": lambda b: kernels.forward(
            table, 0, rng.stream_base(1, rng.PURPOSE_FORWARD, 0), 0, n // 10, args.burn_in, 0.0, backend=b)[0],
        "path": lambda b: kernels.path_outcomes(table, 0, rng.stream_base(1, rng.PURPOSE_PATH, 0), n * 10,
                                                backend=b),
    }
    print(f"model {args.model}, n = {n}, best of {args.repeat}")
    print(f"{'kernel':<10}{'cython [s]':>12}{'python [s]':>12}{'speedup':>10}  identical")
    for name, fn in cases.items():
        tc, oc = timed(lambda: fn("cython"), args.repeat)
        tp, op = timed(lambda: fn("python"), args.repeat)
        pairs = zip(oc, op) if isinstance(oc, tuple) else [(oc, op)]
        same = all(np.array_equal(a, b) for a, b in pairs)
        print(f"{name:<10}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}  {same}")


if __name__ == "__main__":
    main()
