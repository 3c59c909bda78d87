"""Compare the numba-compiled kernels with the pure-numpy fallback.

Each path runs in its own interpreter because the backend is chosen at import
time from ``INTERACTING_BS_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--sizes 200 400 800] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from interacting_bs import (GridSpec, MarketParams, OptionContract, PowerLawRho, USE_NUMBA,
                            evaluate_on_path, solve_interacting)
from interacting_bs import kernels

sizes, repeat = json.loads(sys.argv[1]), int(sys.argv[2])
params = MarketParams(r=0.00019, mu=0.0005, sigma=0.0046)
contract = OptionContract(strike=100.0, maturity_T=62.0)
spec = PowerLawRho(0.1242, -0.2159, -0.1162)

def best(fn):
    fn()  # warm-up (includes compilation on the numba path)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

rows = []
for n in sizes:
    grid = GridSpec.for_contract(contract, n_space=n, n_time=n)
    rows.append({"kernel": "solve_interacting", "size": n,
                 "seconds": best(lambda: solve_interacting(contract, params, spec, grid, t_start=1.0))})
    rng = np.random.default_rng(0)
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    di, b = 3 + rng.uniform(0, 1, n), rng.normal(size=n)
    rows.append({"kernel": "tridiagonal_solve", "size": n,
                 "seconds": best(lambda: kernels._tridiag(lo, di, up, b))})
    surf = solve_interacting(contract, params, spec, grid, t_start=1.0)
    tq = rng.uniform(1.0, 62.0, 10000)
    sq = rng.uniform(50.0, 150.0, 10000)
    rows.append({"kernel": "evaluate_on_path[1e4]", "size": n,
                 "seconds": best(lambda: evaluate_on_path(surf, tq, sq))})
print(json.dumps({"numba": USE_NUMBA, "rows": rows}))
"""


def run(disable, sizes, repeat):
    env = dict(os.environ)
    env.pop("INTERACTING_BS_DISABLE_NUMBA", None)
    if disable:
        env["INTERACTING_BS_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, json.dumps(sizes), str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[200, 400, 800])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    fast = run(False, args.sizes, args.repeat)
    slow = run(True, args.sizes, args.repeat)
    if not fast["numba"]:
        print("note: numba unavailable, both columns use the fallback path")
    print(f"{'kernel':<24}{'size':>6}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for a, b in zip(fast["rows"], slow["rows"]):
        print(f"{a['kernel']:<24}{a['size']:>6}{a['seconds']:>12.4g}{b['seconds']:>12.4g}"
              f"{b['seconds'] / a['seconds']:>10.1f}")


if __name__ == "__main__":
    main()
