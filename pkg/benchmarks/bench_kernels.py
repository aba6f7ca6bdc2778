"""Compare the numba-compiled MPFA kernels with the pure-numpy fallback.

Each mode runs in a fresh interpreter because ``NCRFLOW_JIT`` is read at
import time.  Usage::

    python benchmarks/bench_kernels.py --n 40 --repeat 3
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from ncrflow import _jit, kernels, mesh, mpfa

n, repeat = int(sys.argv[1]), int(sys.argv[2])
tri = mesh.generate_kershaw(n, 0.3, "alternating")
table = mpfa.build_fan_table(tri)
rng = np.random.default_rng(0)
pressure = rng.standard_normal(tri.ncells)
flux = rng.standard_normal(2 * len(tri.boundary_facets))

def run():
    coef, flux_coef, cond = mpfa._eliminate_table(table)
    grads = kernels.apply_coefficients(table.fan_ptr, table.coef_ptr, table.cells, coef, flux_coef,
                                       table.half_edge, pressure, flux)
    return coef, grads

t0 = time.perf_counter()
run()
first = time.perf_counter() - t0
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    coef, grads = run()
    times.append(time.perf_counter() - t0)
np.save(sys.argv[3], grads)
print(json.dumps({"jit": _jit.USE_NUMBA, "first": first, "best": min(times), "vertices": tri.nvertices}))
"""


def run_mode(flag, n, repeat, out):
    env = dict(os.environ, NCRFLOW_JIT=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeat), out],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=40)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    import numpy as np
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        a = os.path.join(tmp, "jit.npy")
        b = os.path.join(tmp, "py.npy")
        fast = run_mode("1", args.n, args.repeat, a)
        slow = run_mode("0", args.n, args.repeat, b)
        diff = float(np.abs(np.load(a) - np.load(b)).max())
    print(f"mesh n={args.n} ({fast['vertices']} fans)")
    print(f"numba  first call {fast['first']:8.3f} s   best {fast['best']:8.4f} s   (compiled: {fast['jit']})")
    print(f"numpy  first call {slow['first']:8.3f} s   best {slow['best']:8.4f} s")
    print(f"speedup {slow['best'] / fast['best']:.1f}x   max |difference| {diff:.2e}")


if __name__ == "__main__":
    main()
