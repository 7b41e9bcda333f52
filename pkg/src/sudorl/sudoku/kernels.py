"""Search-kernel dispatch: compiled extension when available, else pure Python.

Set ``SUDORL_PURE=1`` to force the pure backend (used by the benchmark and by
the cross-backend equivalence tests).  Both backends implement identical
algorithms with identical enumeration order, so results never depend on which
one is active.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pure

_speedups = None
if os.environ.get("SUDORL_PURE", "") != "1":
    try:
        from . import _speedups  # type: ignore[no-redef]
    except ImportError:
        _speedups = None


HAVE_EXT = _speedups is not None


def backend_name() -> str:
    return "cython" if _speedups is not None else "python"


def _flat_i32(cells) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(cells, dtype=np.int32).reshape(-1))


def count_solutions(cells, side: int, box_size: int, limit: int) -> int:
    flat = _flat_i32(cells)
    if _speedups is not None:
        return _speedups.count_solutions(flat, side, box_size, limit)
    return _pure.count_solutions(flat.tolist(), side, box_size, limit)


def solve_all(cells, side: int, box_size: int, limit: int) -> list[np.ndarray]:
    flat = _flat_i32(cells)
    if _speedups is not None:
        return _speedups.solve_all(flat, side, box_size, limit)
    sols = _pure.solve_all(flat.tolist(), side, box_size, limit)
    return [np.asarray(s, dtype=np.int32) for s in sols]


def solve_reference(cells, side: int, box_size: int):
    """(n_blank, 3) array of (row, col, val) moves, or None if unsolvable."""
    flat = _flat_i32(cells)
    if _speedups is not None:
        return _speedups.solve_reference(flat, side, box_size)
    moves = _pure.solve_reference(flat.tolist(), side, box_size)
    if moves is None:
        return None
    return np.asarray(moves, dtype=np.int32).reshape(-1, 3)


def fill_complete(cells, side: int, box_size: int, value_orders):
    """Completed flat grid honoring per-cell value orders, or None."""
    flat = _flat_i32(cells)
    orders = np.ascontiguousarray(np.asarray(value_orders, dtype=np.int32))
    if _speedups is not None:
        return _speedups.fill_complete(flat, side, box_size, orders)
    filled = _pure.fill_complete(flat.tolist(), side, box_size, orders.tolist())
    if filled is None:
        return None
    return np.asarray(filled, dtype=np.int32)
