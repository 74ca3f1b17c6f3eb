"""Compare the compiled kernels with the numpy fallback.

Two measurements:

* kernel throughput on large random arrays, calling each backend directly;
* end-to-end protocol batches, each backend in its own interpreter
  (the fallback is forced with ``QSUM3_PURE_PYTHON=1``).

Usage: python bench/benchmark.py [--size N] [--repeat R] [--runs T]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from qsum3 import _kernels_py

try:
    from qsum3 import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

E2E = """
import json, time
from qsum3 import BACKEND
from qsum3.harness import RunSpec, monte_carlo
from qsum3.protocol import ProtocolConfig
cfg = ProtocolConfig({n}, {delta}, 32, 32, seed=5)
t = time.perf_counter()
rep = monte_carlo(RunSpec(cfg, trials={runs}))
print(json.dumps({{"backend": BACKEND, "seconds": time.perf_counter() - t, "completed": rep.completed}}))
"""


def kernel_cases(size: int):
    gen = np.random.default_rng(0)
    s1 = gen.integers(0, 4, size).astype(np.int8)
    s2 = gen.integers(0, 4, size).astype(np.int8)
    bases = gen.integers(0, 2, size).astype(np.int8)
    ann = gen.choice(np.array([0, 3, 4], dtype=np.int8), size)
    u = gen.random(size)
    return {
        "bell_sample": lambda k: k.bell_sample(s1, s2, u),
        "measure_bases": lambda k: k.measure_bases(s1, bases, u),
        "announce": lambda k: k.announce(s2),
        "audit_xx": lambda k: k.audit_xx(s1, s2, ann),
        "message_indices": lambda k: k.message_indices(s1, s2, ann),
    }


def bench_kernels(size: int, repeat: int) -> list[dict]:
    rows = []
    for name, call in kernel_cases(size).items():
        row = {"kernel": name, "size": size}
        for label, mod in (("python", _kernels_py), ("cython", _kernels_c)):
            if mod is None:
                continue
            best = min(timeit.repeat(lambda: call(mod), number=1, repeat=repeat))
            row[f"{label}_Mitems_per_s"] = round(size / best / 1e6, 2)
        if "cython_Mitems_per_s" in row:
            row["speedup"] = round(row["cython_Mitems_per_s"] / row["python_Mitems_per_s"], 2)
        rows.append(row)
    return rows


def bench_end_to_end(n: int, delta: int, runs: int) -> list[dict]:
    out = []
    for pure in ("1", "0"):
        env = dict(os.environ, QSUM3_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", E2E.format(n=n, delta=delta, runs=runs)],
                             env=env, capture_output=True, text=True, check=True)
        row = json.loads(res.stdout)
        row.update(n=n, delta=delta, runs=runs)
        out.append(row)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=2_000_000, help="array length for kernel timings")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--runs", type=int, default=20, help="protocol runs per end-to-end batch")
    args = ap.parse_args()

    print(f"kernels ({args.size} items, best of {args.repeat})")
    for row in bench_kernels(args.size, args.repeat):
        print("  " + json.dumps(row))
    if _kernels_c is None:
        print("  compiled extension not built; only the fallback was timed")
    print("end-to-end batches")
    for n, delta in ((32, 16), (4096, 1024)):
        for row in bench_end_to_end(n, delta, args.runs):
            print("  " + json.dumps(row))


if __name__ == "__main__":
    main()
