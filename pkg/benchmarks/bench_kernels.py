"""
Numba kernels vs the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in its own
interpreter (``DERREG_DISABLE_JIT=1`` selects numpy). Reported times are the
best of ``--repeat`` runs after one warm-up call, so JIT compilation is not
counted.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 9 20 50 --rounds 500 --repeat 5
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from derreg._jit import backend
from derreg.graph import ring
from derreg.measure import clean
from derreg.problem import random_problem
from derreg.solvers import run_solver

sizes, rounds, repeat = json.loads(sys.argv[1])

def best(fn):
    fn()
    out = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out = min(out, time.perf_counter() - t0)
    return out

rows = []
for n in sizes:
    prob = random_problem(np.random.default_rng(n), n)
    g = ring(n)
    for alg in ("rc", "pd", "dana"):
        rows.append((f"{alg} ring({n})", best(lambda: run_solver(alg, prob, g, rounds))))
trace = 10 + np.cumsum(np.random.default_rng(0).normal(size=2401))
rows.append(("meter filter 2401 s", best(lambda: clean(trace))))
print(json.dumps({"backend": backend(), "rows": rows}))
"""


def run_backend(disable_jit, sizes, rounds, repeat):
    env = dict(os.environ)
    env.pop("DERREG_DISABLE_JIT", None)
    if disable_jit:
        env["DERREG_DISABLE_JIT"] = "1"
    res = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps([sizes, rounds, repeat])],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--sizes", type=int, nargs="+", default=[9, 20, 50])
    ap.add_argument("--rounds", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    jit = run_backend(False, args.sizes, args.rounds, args.repeat)
    plain = run_backend(True, args.sizes, args.rounds, args.repeat)
    print(f"{args.rounds} rounds per solve, best of {args.repeat}")
    print(f"{'case':<22}{jit['backend'] + ' ms':>12}{plain['backend'] + ' ms':>12}{'speedup':>10}")
    for (name, t_jit), (_, t_np) in zip(jit["rows"], plain["rows"]):
        print(f"{name:<22}{t_jit * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
