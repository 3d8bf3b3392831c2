"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--steps 600]

Prints one line per (kernel, backend) with the best wall time and the
speed-up over the Python backend, and checks that both backends agree.
"""

import argparse
import time

import numpy as np

from pidlcf import kernels
from pidlcf.physics import FAMILY_CODES, make_params


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def identical(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(identical(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(a, b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=600)
    ap.add_argument("--runs", type=int, default=50, help="rollouts per timing sample")
    args = ap.parse_args()

    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled extension not built; only the Python backend is available")
    dt = 0.1
    n = args.steps
    t = np.arange(n) * dt
    leader_vel = 15.0 + 3.0 * np.sin(0.2 * t)
    leader_pos = 40.0 + np.concatenate([[0.0], np.cumsum(leader_vel[:-1] * dt)])
    warm = np.zeros(n)
    positions = np.cumsum(np.full(n, 1.5)) + 0.01 * np.random.default_rng(0).standard_normal(n)

    cases = {}
    for fam in ("IDM", "OVM"):
        p = make_params(fam).vector()
        code = FAMILY_CODES[fam]
        cases[f"integrate_follower[{fam}]"] = lambda m, code=code, p=p: [
            m.integrate_follower(code, p, -2.0, dt, leader_pos, leader_vel, 1.0, 10.0, warm, 1,
                                 m.TERMINATE_NEVER, 0.0)
            for _ in range(args.runs)
        ]
    cases["median_velocity"] = lambda m: [m.median_velocity(positions, dt) for _ in range(args.runs)]

    for name, fn in cases.items():
        results = {}
        for bname, mod in backends.items():
            results[bname] = best_time(lambda: fn(mod), args.repeat)
        base = results["python"][0]
        for bname, (sec, _) in results.items():
            print(f"{name:32s} {bname:7s} {sec * 1e3:9.2f} ms  x{base / sec:6.1f}")
        if "cython" in results:
            a, b = results["python"][1][0], results["cython"][1][0]
            print(f"{'':32s} outputs identical: {identical(a, b)}")


if __name__ == "__main__":
    main()
