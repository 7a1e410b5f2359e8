"""Timing comparison of the numba and pure-numpy kernel backends.

Runs the same Monte-Carlo workloads under both settings of the
``FBLBOUNDS_BACKEND`` environment variable (in subprocesses, since the
backend is fixed at import time) and prints a table of wall times.

Usage: python benchmarks/bench_backends.py [--samples N]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKLOAD = r"""
import json, os, time
import numpy as np
from fblbounds.backend import BACKEND
from fblbounds.config import SystemConfig
from fblbounds.infodensity import sample_sum_batch
from fblbounds.exponent import gallager_E

n = int(os.environ["BENCH_SAMPLES"])
results = {"backend": BACKEND}

cfg = SystemConfig(n_tx=2, n_rx=2, n_res=4, n_subc=12, n_ofdm=2,
                   link="uplink", snr_db=20.0)
sample_sum_batch(cfg, 1024, seed=0)          # warm-up / JIT compile
t0 = time.perf_counter()
sample_sum_batch(cfg, n, seed=0)
results["info_density_sum_s"] = time.perf_counter() - t0

ecfg = SystemConfig(n_tx=4, n_rx=1, n_res=4, n_subc=21, n_ofdm=2,
                    link="downlink", snr_db=5.0)
gallager_E(0.5, ecfg, 1024, 0)               # warm-up / JIT compile
t0 = time.perf_counter()
gallager_E(0.5, ecfg, n, 0)
results["gallager_exponent_s"] = time.perf_counter() - t0

print(json.dumps(results))
"""


def run_backend(backend: str, samples: int) -> dict:
    env = dict(os.environ, FBLBOUNDS_BACKEND=backend, BENCH_SAMPLES=str(samples))
    out = subprocess.run(
        [sys.executable, "-c", _WORKLOAD], env=env,
        capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=float, default=2e5)
    args = ap.parse_args()
    samples = int(args.samples)

    rows = [run_backend(b, samples) for b in ("numpy", "numba")]
    keys = [k for k in rows[0] if k != "backend"]
    print(f"{samples} samples per workload")
    header = f"{'workload':<24}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}"
    print(header)
    for k in keys:
        times = [r[k] for r in rows]
        speedup = times[0] / times[1] if times[1] > 0 else float("inf")
        print(f"{k:<24}" + "".join(f"{t:>11.3f}s" for t in times) + f"{speedup:>9.2f}x")


if __name__ == "__main__":
    main()
