"""Benchmark the compiled search kernels against the pure-Python fallback.

Run after installing the package:

    python benchmarks/bench_kernels.py [--side 9] [--puzzles 30]

Compares solve_all (uniqueness counting), solve_reference, and full puzzle
generation on the same seeded workload for both backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sudorl.seeding import derive_rng
from sudorl.sudoku import _pure, kernels
from sudorl.sudoku.generate import generate_puzzle


def _timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--side", type=int, default=9)
    ap.add_argument("--puzzles", type=int, default=30)
    args = ap.parse_args()
    side = args.side
    box = int(side ** 0.5)
    givens = {4: 6, 9: 28}.get(side, side * side // 3)

    puzzles = [generate_puzzle(seed, givens, side=side)[0] for seed in range(args.puzzles)]
    flats = [p.cells.reshape(-1).astype(np.int32) for p in puzzles]

    backends = [("python", _pure)]
    if kernels.HAVE_EXT:
        from sudorl.sudoku import _speedups
        backends.append(("cython", _speedups))
    else:
        print("compiled extension not available; benchmarking pure backend only")

    rng = derive_rng(0, "bench-fill")
    orders = [rng.permuted(np.tile(np.arange(1, side + 1, dtype=np.int32),
                                   (side * side, 1)), axis=1)
              for _ in range(args.puzzles)]
    empty = np.zeros(side * side, dtype=np.int32)

    rows = []
    for name, mod in backends:
        # the compiled kernels take int32 buffers, the fallback takes lists
        if name == "python":
            boards = [f.tolist() for f in flats]
            fills = [(empty.tolist(), [list(map(int, row)) for row in o])
                     for o in orders]
        else:
            boards = [f.copy() for f in flats]
            fills = [(empty.copy(), np.ascontiguousarray(o)) for o in orders]
        t_count = _timeit(lambda: [mod.count_solutions(b, side, box, 2)
                                   for b in boards])
        t_ref = _timeit(lambda: [mod.solve_reference(b, side, box) for b in boards])
        t_fill = _timeit(lambda: [mod.fill_complete(c, side, box, o)
                                  for c, o in fills])
        rows.append((name, t_count, t_ref, t_fill))

    print(f"\nside {side}, {args.puzzles} puzzles, best of 3 (seconds)")
    print(f"{'backend':<10}{'count_solutions':>18}{'solve_reference':>18}{'fill_complete':>16}")
    for name, t_count, t_ref, t_fill in rows:
        print(f"{name:<10}{t_count:>18.4f}{t_ref:>18.4f}{t_fill:>16.4f}")
    if len(rows) == 2:
        base = rows[0]
        fast = rows[1]
        print(f"\nspeedup (python / cython): "
              f"count {base[1] / fast[1]:.1f}x  ref {base[2] / fast[2]:.1f}x  "
              f"fill {base[3] / fast[3]:.1f}x")


if __name__ == "__main__":
    main()
