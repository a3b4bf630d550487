"""Compiled simplex kernels against the numpy fallback.

Two measurements: each kernel on synthetic inputs, then whole MILP solves
(a case-study planning problem and a batch of random MILPs) run in a
subprocess per implementation, the fallback forced by DISTRICTOPT_PURE_PYTHON=1.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

END_TO_END = r"""
import json, sys, time
sys.path.insert(0, sys.argv[1])
from districtopt.casestudy import HOURLY, district, synthetic_profiles
from districtopt.ocp import assemble
from districtopt.solver import COMPILED, SolverConfig, solve_milp
from oracles import random_milp

net = district(synthetic_profiles(24, 24, seed=0))
model = assemble(net, HOURLY).model
t0 = time.perf_counter()
for _ in range(int(sys.argv[2])):
    sol = solve_milp(model, SolverConfig(rel_gap=1e-4))
district_s = (time.perf_counter() - t0) / int(sys.argv[2])
t0 = time.perf_counter()
for seed in range(40):
    solve_milp(random_milp(seed), SolverConfig(rel_gap=1e-9))
print(json.dumps({"compiled": COMPILED, "district_s": district_s,
                  "random40_s": time.perf_counter() - t0, "objective": sol.objective}))
"""


def kernel_inputs(rng, m=400, n=1200, k=60):
    rows = rng.integers(0, m, k).astype(np.int_)
    piv = rng.uniform(0.5, 2.0, k)
    ptr = np.arange(0, 8 * (k + 1), 8, dtype=np.int_)
    idx = rng.integers(0, m, 8 * k).astype(np.int_)
    val = rng.normal(size=8 * k)
    status = rng.integers(0, 4, n).astype(np.int8)
    lb = np.zeros(n)
    ub = np.where(rng.random(n) < 0.3, np.inf, 5.0)
    alpha = rng.normal(size=m)
    xb = rng.uniform(0, 5, m)
    head = rng.permutation(m + n)[:m].astype(np.int_)
    return dict(eta=(rows, piv, ptr, idx, val, k), z=rng.normal(size=m), d=rng.normal(size=n),
                status=status, lb=lb, ub=ub, alpha=alpha, xb=xb, lbb=np.zeros(m),
                ubb=np.full(m, 5.0), head=head)


def time_kernels(mod, x, repeat):
    calls = {
        "eta_ftran": lambda: mod.eta_ftran(x["z"].copy(), *x["eta"]),
        "eta_btran": lambda: mod.eta_btran(x["z"].copy(), *x["eta"]),
        "price": lambda: mod.price(x["d"], x["status"], x["lb"], x["ub"], 1e-9, False),
        "ratio_test": lambda: mod.ratio_test(x["alpha"], 1.0, x["xb"], x["lbb"], x["ubb"],
                                             x["head"], 1e-9, 1e-9, False),
    }
    return {name: min(timeit.repeat(f, number=200, repeat=repeat)) / 200 for name, f in calls.items()}


def end_to_end(pure: bool, repeat: int) -> dict:
    env = dict(os.environ, DISTRICTOPT_PURE_PYTHON="1" if pure else "0")
    tests = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests")
    out = subprocess.run([sys.executable, "-c", END_TO_END, tests, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    from districtopt.solver import _kernels_py as pure
    try:
        from districtopt.solver import _kernels as fast
    except ImportError:
        fast = None
    x = kernel_inputs(np.random.default_rng(0))
    slow_t = time_kernels(pure, x, args.repeat)
    fast_t = time_kernels(fast, x, args.repeat) if fast else {}
    print(f"{'kernel':<12}{'numpy us':>12}{'compiled us':>14}{'speedup':>10}")
    for name, t in slow_t.items():
        f = fast_t.get(name)
        print(f"{name:<12}{t * 1e6:>12.1f}" + (f"{f * 1e6:>14.1f}{t / f:>10.1f}" if f else f"{'n/a':>14}"))

    print()
    rows = {"numpy": end_to_end(True, args.repeat)}
    if fast:
        rows["compiled"] = end_to_end(False, args.repeat)
    print(f"{'solver':<10}{'district plan s':>17}{'40 random MILPs s':>20}{'objective':>14}")
    for name, r in rows.items():
        print(f"{name:<10}{r['district_s']:>17.3f}{r['random40_s']:>20.3f}{r['objective']:>14.4f}")


if __name__ == "__main__":
    main()
