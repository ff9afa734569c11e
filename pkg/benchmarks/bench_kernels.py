"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on inputs at the full experiment sizes (99-node line and
cycle, 127-node tree, 11x11 grid). Also times one end-to-end call of the
code paths that use the kernels, with each backend forced via
NETLQR_PURE_PYTHON in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from netlqr import _kernels_py
from netlqr.graph import build_topology, expand_graph, neighborhoods

try:
    from netlqr import _kernels
except ImportError:
    _kernels = None


def csr(topo):
    nbrs = topo.neighbor_lists()
    indptr = np.concatenate([[0], np.cumsum([len(x) for x in nbrs])]).astype(np.int64)
    indices = np.array([j for x in nbrs for j in x], dtype=np.int64)
    return indptr, indices


def cases():
    rng = np.random.default_rng(0)
    for kind, kw in [("cycle", dict(n=99)), ("tree", dict(depth=7)), ("grid4", dict(side=11))]:
        topo = build_topology(kind, **kw)
        nbr = neighborhoods(topo)
        dist = np.ascontiguousarray(nbr.dist, dtype=np.int64)
        n = topo.n
        indptr, indices = csr(expand_graph(topo, 2))
        W = rng.integers(0, 10**6, (n, n)).astype(np.int64)
        norms = rng.uniform(0, 1, (n, n))
        E = rng.standard_normal((n, n, n))
        agents = np.arange(n, dtype=np.int64)
        yield f"walk_step {kind}-{n} r=2", lambda m: m.walk_step(W, indptr, indices, 2**62)
        yield f"ratio_scan {kind}-{n}", lambda m: m.ratio_scan(norms, dist, nbr.diameter, 1e-13)
        yield f"masked_local_sum {kind}-{n} k=3", lambda m: m.masked_local_sum(E, agents, agents, agents, dist, 3)


END_TO_END = """
import time, numpy as np
from netlqr import kernels
from netlqr.decay import certify
from netlqr.distributed import approx_gradient_all
from netlqr.graph import build_topology, count_walks
from netlqr.lqr import build_paper_system
sys = build_paper_system(build_topology("line", 99), sigma0=0.1)
K = np.zeros((99, 99))
t0 = time.perf_counter()
count_walks(build_topology("grid4", side=11), 2, 20)
certify(sys, K, t_max=20)
for k in (1, 3, 5):
    approx_gradient_all(sys, K, k, 98)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace` first")
        return 1
    print(f"{'kernel':<32} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<32} {t_py:>10.2f} {t_cy:>10.2f} {t_py / t_cy:>8.1f}")
    print()
    for env in ({"NETLQR_PURE_PYTHON": "1"}, {"NETLQR_PURE_PYTHON": "0"}):
        out = subprocess.run([sys.executable, "-c", END_TO_END], env={**os.environ, **env},
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"end-to-end ({out[0]}): {float(out[1]):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
