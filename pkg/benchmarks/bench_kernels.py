"""Compare the compiled (ctape) and numpy (pytape) tape backends.

Usage: python benchmarks/bench_kernels.py [--repeat 5] [--json]

Reports the best-of-N wall time per workload and the speedup of ctape over
pytape.  Every workload also checks that both backends return identical bits.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from dischelm import kernels
from dischelm.exprlang import FDE_VARS
from dischelm.fdeop import ContinuousOp, SecondOrderOp, builtin_corpus, direct_discretize
from dischelm.helmholtz import SamplingConfig, check_helmholtz
from dischelm.lagrange import synthesize, verify_synthesis


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _stencil_points(m, rng):
    a = rng.uniform(-2, 2, (6, m))
    a[5] = 0.1
    return a


def kernel_workloads(rng):
    ops = {
        "x + w": SecondOrderOp("x + w"),
        "sin blend 1/2": direct_discretize(ContinuousOp("x + sin(v)*w"), 0.5),
        "x + vm*vp + cos(t)*w^3": SecondOrderOp("x + vm*vp + cos(t)*w^3"),
    }
    seed = np.zeros((6, 4, 1))
    seed[:4, :, 0] = np.eye(4)
    for m in (1_000, 100_000):
        args = _stencil_points(m, rng)
        tangents = np.broadcast_to(seed, (6, 4, m))
        for name, op in ops.items():
            tape = op.body.tape(FDE_VARS)
            yield f"values    {name:<24} m={m}", tape, args, None
            yield f"partials  {name:<24} m={m}", tape, args, tangents


def end_to_end(repeat):
    osc = SecondOrderOp("x + w + sin(t)")
    couple = synthesize(osc)
    cfg = SamplingConfig(grids=50)
    work = {
        "check_helmholtz over corpus": lambda: [check_helmholtz(e.op, cfg) for e in builtin_corpus()],
        "verify_synthesis (32-node quadrature)": lambda: verify_synthesis(osc, couple, cfg),
    }
    saved = kernels.BACKEND
    try:
        for name, fn in work.items():
            row = {"workload": name}
            for b in kernels.available_backends():
                kernels.BACKEND = b
                row[b] = _best(fn, repeat)
            yield row
    finally:
        kernels.BACKEND = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print rows as JSON")
    ns = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "ctape" not in backends:
        print("compiled backend not built; only pytape available")
    rng = np.random.default_rng(0)
    rows = []
    for name, tape, args, tangents in kernel_workloads(rng):
        row = {"workload": name}
        results = {}
        for b in backends:
            row[b] = _best(lambda: kernels.run_tape(tape, args, tangents, backend=b), ns.repeat)
            results[b] = kernels.run_tape(tape, args, tangents, backend=b)
        ref = results["pytape"]
        row["identical"] = all(
            np.array_equal(r[0], ref[0]) and np.array_equal(r[1], ref[1]) for r in results.values()
        )
        rows.append(row)
    rows.extend(end_to_end(max(1, ns.repeat // 2)))

    if ns.json:
        print(json.dumps(rows, indent=2))
        return
    header = f"{'workload':<48}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        line = f"{row['workload']:<48}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in backends)
        if "ctape" in row:
            line += f"{row['pytape'] / row['ctape']:>9.1f}x"
        if row.get("identical") is False:
            line += "  MISMATCH"
        print(line)


if __name__ == "__main__":
    main()
