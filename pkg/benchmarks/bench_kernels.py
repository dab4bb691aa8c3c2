"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 200]
"""
import argparse
import time

import numpy as np

from reliable_fw import kernels
from reliable_fw.oracles import random_polytope


def _instances(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        d = 2 + k % 3
        P = random_polytope(d, 2 * d + 2, rng)
        out.append((P.A, P.b, rng.normal(size=d), rng.normal(size=d) * 3))
    return out


def _time(fn, cases):
    t0 = time.perf_counter()
    for case in cases:
        fn(*case)
    return (time.perf_counter() - t0) / len(cases)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cases = _instances(args.repeat, args.seed)
    jobs = {
        "lp_min": lambda be: (lambda A, b, c, x: be.lp_min(A, b, c)),
        "feasible_intersections": lambda be: (lambda A, b, c, x: be.feasible_intersections(A, b)),
        "project": lambda be: (lambda A, b, c, x: be.project(A, b, x)),
    }
    names = [n for n in ("compiled", "python") if n in kernels.BACKENDS]
    print(f"{'kernel':<24}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speedup':>10}")
    for job, make in jobs.items():
        times = [_time(make(kernels.get_backend(n)), cases) * 1e3 for n in names]
        speed = times[-1] / times[0] if len(times) == 2 else float("nan")
        print(f"{job:<24}" + "".join(f"{t:>16.4f}" for t in times) + f"{speed:>10.1f}")
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
