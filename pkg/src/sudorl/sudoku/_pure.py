"""Pure-Python search kernels: exhaustive solving, reference solving, grid fill.

Same contracts as the compiled ``_speedups`` module; the two must produce
identical output for identical input (the test suite cross-checks them).
Boards are flat row-major lists of ints, 0 = blank, bit ``v-1`` of a mask
represents value ``v``.
"""

from __future__ import annotations


def _init_masks(cells, side, box_size):
    """Row/col/box occupancy masks, or None if the givens conflict."""
    rows = [0] * side
    cols = [0] * side
    boxes = [0] * side
    for i, v in enumerate(cells):
        if v == 0:
            continue
        r, c = divmod(i, side)
        b = (r // box_size) * box_size + (c // box_size)
        bit = 1 << (v - 1)
        if (rows[r] | cols[c] | boxes[b]) & bit:
            return None
        rows[r] |= bit
        cols[c] |= bit
        boxes[b] |= bit
    return rows, cols, boxes


def count_solutions(cells, side, box_size, limit):
    """Number of distinct completions, capped at ``limit``."""
    return len(solve_all(cells, side, box_size, limit))


def solve_all(cells, side, box_size, limit):
    """Up to ``limit`` completions, enumerated row-major / ascending-value."""
    masks = _init_masks(cells, side, box_size)
    if masks is None:
        return []
    rows, cols, boxes = masks
    full = (1 << side) - 1
    work = list(cells)
    blanks = [i for i, v in enumerate(work) if v == 0]
    out = []

    def recurse(k):
        if k == len(blanks):
            out.append(list(work))
            return len(out) >= limit
        i = blanks[k]
        r, c = divmod(i, side)
        b = (r // box_size) * box_size + (c // box_size)
        cand = full & ~(rows[r] | cols[c] | boxes[b])
        for v in range(1, side + 1):
            bit = 1 << (v - 1)
            if not cand & bit:
                continue
            work[i] = v
            rows[r] |= bit
            cols[c] |= bit
            boxes[b] |= bit
            done = recurse(k + 1)
            rows[r] &= ~bit
            cols[c] &= ~bit
            boxes[b] &= ~bit
            work[i] = 0
            if done:
                return True
        return False

    recurse(0)
    return out


def solve_reference(cells, side, box_size):
    """Deterministic trajectory filling every blank, or None if unsolvable.

    Cell choice: fewest candidates, ties broken row-major.  Branch values are
    tried ascending; only moves on the successful branch are recorded.
    """
    masks = _init_masks(cells, side, box_size)
    if masks is None:
        return None
    rows, cols, boxes = masks
    full = (1 << side) - 1
    work = list(cells)
    n_blank = sum(1 for v in work if v == 0)
    moves = []

    def recurse(remaining):
        if remaining == 0:
            return True
        best_i = -1
        best_cand = 0
        best_count = side + 1
        for i, v in enumerate(work):
            if v != 0:
                continue
            r, c = divmod(i, side)
            b = (r // box_size) * box_size + (c // box_size)
            cand = full & ~(rows[r] | cols[c] | boxes[b])
            count = cand.bit_count()
            if count == 0:
                return False
            if count < best_count:
                best_i, best_cand, best_count = i, cand, count
                if count == 1:
                    break
        r, c = divmod(best_i, side)
        b = (r // box_size) * box_size + (c // box_size)
        for v in range(1, side + 1):
            bit = 1 << (v - 1)
            if not best_cand & bit:
                continue
            work[best_i] = v
            rows[r] |= bit
            cols[c] |= bit
            boxes[b] |= bit
            moves.append((r, c, v))
            if recurse(remaining - 1):
                return True
            moves.pop()
            rows[r] &= ~bit
            cols[c] &= ~bit
            boxes[b] &= ~bit
            work[best_i] = 0
        return False

    if not recurse(n_blank):
        return None
    return moves


def fill_complete(cells, side, box_size, value_orders):
    """Complete the grid trying per-cell value orders; None if impossible.

    ``value_orders[i]`` is the value sequence tried at flat cell ``i``;
    randomized orders give a seeded random completed grid.
    """
    masks = _init_masks(cells, side, box_size)
    if masks is None:
        return None
    rows, cols, boxes = masks
    full = (1 << side) - 1
    work = list(cells)
    blanks = [i for i, v in enumerate(work) if v == 0]

    def recurse(k):
        if k == len(blanks):
            return True
        i = blanks[k]
        r, c = divmod(i, side)
        b = (r // box_size) * box_size + (c // box_size)
        cand = full & ~(rows[r] | cols[c] | boxes[b])
        for v in value_orders[i]:
            bit = 1 << (v - 1)
            if not cand & bit:
                continue
            work[i] = v
            rows[r] |= bit
            cols[c] |= bit
            boxes[b] |= bit
            if recurse(k + 1):
                return True
            rows[r] &= ~bit
            cols[c] &= ~bit
            boxes[b] &= ~bit
            work[i] = 0
        return False

    if not recurse(0):
        return None
    return work
