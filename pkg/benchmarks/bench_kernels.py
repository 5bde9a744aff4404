"""Compare the compiled kernels against their pure-Python/numpy fallbacks.

    python benchmarks/bench_kernels.py [--states 120] [--repeat 3]

Each row times one kernel on the same input through both paths. The
end-to-end rows run ``delta`` and ``robust_bisimilarity`` in a subprocess
with ``ROBUST_BISIM_NUMBA`` set to 1 and 0.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from robust_bisim import _kernels
from robust_bisim.distance import _Problem
from robust_bisim.harness import random_chain
from robust_bisim.relations import bisimilarity, partition_to_relation
from robust_bisim.robust import _adjacency, _pred_csr


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_transport(rng, repeat):
    cases = []
    for _ in range(2000):
        m, k = rng.integers(1, 5, size=2)
        cases.append((rng.random((m, k)), rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(k))))

    def run(fn):
        for cost, a, b in cases:
            fn(cost, a, b, np.zeros(cost.shape, np.bool_), np.zeros(cost.shape), False)

    return best_of(lambda: run(_kernels.transport_solve), repeat), best_of(lambda: run(_kernels.transport_solve_py), repeat)


def bench_sweep(chain, repeat):
    prob = _Problem(chain, bisimilarity(chain))

    def run(fn):
        d = prob.d0.copy()
        basic, flow = prob.basic.copy(), prob.flow.copy()
        for i in range(5):
            new = d.copy()
            fn(prob.ptr, prob.idx, prob.prob, prob.ps, prob.pt, prob.off, basic, flow, i > 0, d, new)
            d = new

    return best_of(lambda: run(_kernels.vi_sweep), repeat), best_of(lambda: run(_kernels.vi_sweep_py), repeat)


def bench_filter(chain, repeat):
    r = partition_to_relation(bisimilarity(chain))
    ptr, idx = _pred_csr(chain)
    adj, rmat = _adjacency(chain), r.to_matrix()

    def worklist(fn):
        fn(ptr, idx, r.comp, r.local, r.size, r.offset, r.bits, np.zeros_like(r.bits))

    return (
        best_of(lambda: worklist(_kernels.filter_worklist), repeat),
        best_of(lambda: _kernels.filter_matrix(adj, rmat), repeat),
    )


END_TO_END = """
import time, numpy as np
from robust_bisim.harness import random_chain
from robust_bisim import delta, robust_bisimilarity
c = random_chain(np.random.default_rng({seed}), {n}, n_labels=2, n_blocks={blocks}, max_support=3)
robust_bisimilarity(c); delta(c)  # warm-up / compile
t = time.perf_counter(); robust_bisimilarity(c); r = time.perf_counter() - t
t = time.perf_counter(); delta(c); d = time.perf_counter() - t
print(r, d)
"""


def end_to_end(n: int, seed: int):
    out = {}
    code = END_TO_END.format(seed=seed, n=n, blocks=max(2, n // 4))
    for flag in ("1", "0"):
        env = dict(os.environ, ROBUST_BISIM_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[flag] = [float(x) for x in res.stdout.split()]
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=120)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _kernels.USE_NUMBA:
        sys.exit("numba is disabled (ROBUST_BISIM_NUMBA=0); nothing to compare")

    rng = np.random.default_rng(args.seed)
    chain = random_chain(rng, args.states, n_labels=2, n_blocks=max(2, args.states // 4))
    # compile once before timing
    bench_transport(np.random.default_rng(1), 1)
    bench_sweep(chain, 1)
    bench_filter(chain, 1)

    rows = [
        ("transport_solve x2000", *bench_transport(rng, args.repeat), "python"),
        (f"vi_sweep x5 (n={args.states})", *bench_sweep(chain, args.repeat), "python"),
        (f"filter (n={args.states})", *bench_filter(chain, args.repeat), "numpy matrix"),
    ]
    e2e = end_to_end(args.states, args.seed)
    rows.append((f"robust_bisimilarity (n={args.states})", e2e["1"][0], e2e["0"][0], "numpy"))
    rows.append((f"delta (n={args.states})", e2e["1"][1], e2e["0"][1], "numpy"))

    print(f"{'kernel':<32}{'numba [s]':>12}{'fallback [s]':>14}  fallback  speedup")
    for name, fast, slow, kind in rows:
        print(f"{name:<32}{fast:>12.4f}{slow:>14.4f}  {kind:<9} {slow / fast:>6.1f}x")


if __name__ == "__main__":
    main()
