"""Time the compiled slot loop against the pure-Python fallback.

Both backends run the same simulation and must produce identical traces;
the script reports slots per second for each and the speedup.

    python benchmarks/bench_kernel.py --nodes 20 --slots 200000
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from conjmac.game import InterferenceGraph
from conjmac.netsim import SimConfig, _pykernel, kernel, run_sim
from conjmac.netsim import sim as simmod


def _config(k: int, slots: int, protocol: str, seed: int) -> SimConfig:
    slopes = None if protocol == "dcf" else np.full(k, 3.0 * k)
    stages = max(1, slots // 2000)
    return SimConfig(InterferenceGraph.single_cell(k), protocol, slopes=slopes, n_stages=stages, slots_per_stage=2000, seed=seed)


def _time(chunk_fn, cfg_args, repeat: int):
    simmod.kernel.simulate_chunk = chunk_fn
    best, trace = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace = run_sim(_config(*cfg_args))
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20)
    ap.add_argument("--slots", type=int, default=100_000)
    ap.add_argument("--protocol", default="conjecture_br", choices=["conjecture_br", "dcf", "slot_br"])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    compiled = kernel.simulate_chunk
    if kernel.KERNEL_BACKEND != "cython":
        print("compiled kernel not available; timing the Python fallback only")
    cfg_args = (args.nodes, args.slots, args.protocol, args.seed)
    try:
        t_py, tr_py = _time(_pykernel.simulate_chunk, cfg_args, 1)
        t_c, tr_c = _time(compiled, cfg_args, args.repeat)
    finally:
        simmod.kernel.simulate_chunk = compiled

    n = int(tr_c.slots.sum())
    same = all(np.array_equal(getattr(tr_c, f), getattr(tr_py, f), equal_nan=True) for f in ("p", "successes", "attempts", "s_hat"))
    print(f"{args.protocol}, K={args.nodes}, {n} slots")
    print(f"  {kernel.KERNEL_BACKEND:>7}: {t_c:8.3f} s  {n / t_c:12.0f} slots/s")
    print(f"  {'python':>7}: {t_py:8.3f} s  {n / t_py:12.0f} slots/s")
    print(f"  speedup {t_py / t_c:.1f}x, traces identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
