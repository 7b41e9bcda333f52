# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled search kernels; mirrors ``_pure`` exactly (same enumeration order)."""

from libc.stdlib cimport malloc, free

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef unsigned int mask_t


cdef inline int _popcount(mask_t x):
    cdef int n = 0
    while x:
        x &= x - 1
        n += 1
    return n


cdef struct Board:
    int side
    int box_size
    int n
    int* cells
    mask_t* rows
    mask_t* cols
    mask_t* boxes
    int* blanks
    int n_blank


cdef int _board_init(Board* bd, int[::1] cells, int side, int box_size) except -1:
    """Fill Board from givens; returns 0 ok, 1 contradiction."""
    cdef int i, r, c, b, v
    cdef mask_t bit
    bd.side = side
    bd.box_size = box_size
    bd.n = side * side
    bd.cells = <int*> malloc(bd.n * sizeof(int))
    bd.rows = <mask_t*> malloc(side * sizeof(mask_t))
    bd.cols = <mask_t*> malloc(side * sizeof(mask_t))
    bd.boxes = <mask_t*> malloc(side * sizeof(mask_t))
    bd.blanks = <int*> malloc(bd.n * sizeof(int))
    if not (bd.cells and bd.rows and bd.cols and bd.boxes and bd.blanks):
        raise MemoryError()
    for i in range(side):
        bd.rows[i] = 0
        bd.cols[i] = 0
        bd.boxes[i] = 0
    bd.n_blank = 0
    for i in range(bd.n):
        v = cells[i]
        bd.cells[i] = v
        if v == 0:
            bd.blanks[bd.n_blank] = i
            bd.n_blank += 1
            continue
        r = i / side
        c = i % side
        b = (r / box_size) * box_size + (c / box_size)
        bit = (<mask_t> 1) << (v - 1)
        if (bd.rows[r] | bd.cols[c] | bd.boxes[b]) & bit:
            return 1
        bd.rows[r] |= bit
        bd.cols[c] |= bit
        bd.boxes[b] |= bit
    return 0


cdef void _board_free(Board* bd):
    free(bd.cells)
    free(bd.rows)
    free(bd.cols)
    free(bd.boxes)
    free(bd.blanks)


cdef int _solve_all_rec(Board* bd, int k, int limit, list out):
    """Row-major / ascending-value enumeration; returns 1 when limit reached."""
    cdef int i, r, c, b, v
    cdef mask_t cand, bit, full = ((<mask_t> 1) << bd.side) - 1
    if k == bd.n_blank:
        arr = np.empty(bd.n, dtype=np.int32)
        for i in range(bd.n):
            arr[i] = bd.cells[i]
        out.append(arr)
        return 1 if len(out) >= limit else 0
    i = bd.blanks[k]
    r = i / bd.side
    c = i % bd.side
    b = (r / bd.box_size) * bd.box_size + (c / bd.box_size)
    cand = full & ~(bd.rows[r] | bd.cols[c] | bd.boxes[b])
    for v in range(1, bd.side + 1):
        bit = (<mask_t> 1) << (v - 1)
        if not cand & bit:
            continue
        bd.cells[i] = v
        bd.rows[r] |= bit
        bd.cols[c] |= bit
        bd.boxes[b] |= bit
        if _solve_all_rec(bd, k + 1, limit, out):
            bd.rows[r] &= ~bit
            bd.cols[c] &= ~bit
            bd.boxes[b] &= ~bit
            bd.cells[i] = 0
            return 1
        bd.rows[r] &= ~bit
        bd.cols[c] &= ~bit
        bd.boxes[b] &= ~bit
        bd.cells[i] = 0
    return 0


def solve_all(int[::1] cells, int side, int box_size, int limit):
    cdef Board bd
    cdef int bad = _board_init(&bd, cells, side, box_size)
    out = []
    if not bad:
        _solve_all_rec(&bd, 0, limit, out)
    _board_free(&bd)
    return out


cdef int _count_rec(Board* bd, int k, int limit, int found):
    cdef int i, r, c, b, v
    cdef mask_t cand, bit, full = ((<mask_t> 1) << bd.side) - 1
    if k == bd.n_blank:
        return found + 1
    i = bd.blanks[k]
    r = i / bd.side
    c = i % bd.side
    b = (r / bd.box_size) * bd.box_size + (c / bd.box_size)
    cand = full & ~(bd.rows[r] | bd.cols[c] | bd.boxes[b])
    for v in range(1, bd.side + 1):
        bit = (<mask_t> 1) << (v - 1)
        if not cand & bit:
            continue
        bd.rows[r] |= bit
        bd.cols[c] |= bit
        bd.boxes[b] |= bit
        found = _count_rec(bd, k + 1, limit, found)
        bd.rows[r] &= ~bit
        bd.cols[c] &= ~bit
        bd.boxes[b] &= ~bit
        if found >= limit:
            return found
    return found


def count_solutions(int[::1] cells, int side, int box_size, int limit):
    cdef Board bd
    cdef int bad = _board_init(&bd, cells, side, box_size)
    cdef int found = 0
    if not bad:
        found = _count_rec(&bd, 0, limit, 0)
    _board_free(&bd)
    return found


cdef int _solve_ref_rec(Board* bd, int remaining, int* moves, int depth):
    """Min-candidate cell (row-major ties), values ascending; 1 on success."""
    cdef int i, r, c, b, v, count
    cdef int best_i = -1, best_count = bd.side + 1
    cdef mask_t cand, best_cand = 0, bit
    cdef mask_t full = ((<mask_t> 1) << bd.side) - 1
    if remaining == 0:
        return 1
    for i in range(bd.n):
        if bd.cells[i] != 0:
            continue
        r = i / bd.side
        c = i % bd.side
        b = (r / bd.box_size) * bd.box_size + (c / bd.box_size)
        cand = full & ~(bd.rows[r] | bd.cols[c] | bd.boxes[b])
        count = _popcount(cand)
        if count == 0:
            return 0
        if count < best_count:
            best_i = i
            best_cand = cand
            best_count = count
            if count == 1:
                break
    r = best_i / bd.side
    c = best_i % bd.side
    b = (r / bd.box_size) * bd.box_size + (c / bd.box_size)
    for v in range(1, bd.side + 1):
        bit = (<mask_t> 1) << (v - 1)
        if not best_cand & bit:
            continue
        bd.cells[best_i] = v
        bd.rows[r] |= bit
        bd.cols[c] |= bit
        bd.boxes[b] |= bit
        moves[3 * depth] = r
        moves[3 * depth + 1] = c
        moves[3 * depth + 2] = v
        if _solve_ref_rec(bd, remaining - 1, moves, depth + 1):
            return 1
        bd.rows[r] &= ~bit
        bd.cols[c] &= ~bit
        bd.boxes[b] &= ~bit
        bd.cells[best_i] = 0
    return 0


def solve_reference(int[::1] cells, int side, int box_size):
    cdef Board bd
    cdef int bad = _board_init(&bd, cells, side, box_size)
    cdef int* moves = NULL
    cdef int ok = 0, i
    if not bad:
        moves = <int*> malloc(3 * (bd.n_blank if bd.n_blank else 1) * sizeof(int))
        if not moves:
            _board_free(&bd)
            raise MemoryError()
        ok = _solve_ref_rec(&bd, bd.n_blank, moves, 0)
    if not ok:
        if moves != NULL:
            free(moves)
        _board_free(&bd)
        return None
    arr = np.empty((bd.n_blank, 3), dtype=np.int32)
    for i in range(bd.n_blank):
        arr[i, 0] = moves[3 * i]
        arr[i, 1] = moves[3 * i + 1]
        arr[i, 2] = moves[3 * i + 2]
    free(moves)
    _board_free(&bd)
    return arr


cdef int _fill_rec(Board* bd, int k, int[:, ::1] value_orders):
    cdef int i, r, c, b, v, j
    cdef mask_t cand, bit, full = ((<mask_t> 1) << bd.side) - 1
    if k == bd.n_blank:
        return 1
    i = bd.blanks[k]
    r = i / bd.side
    c = i % bd.side
    b = (r / bd.box_size) * bd.box_size + (c / bd.box_size)
    cand = full & ~(bd.rows[r] | bd.cols[c] | bd.boxes[b])
    for j in range(bd.side):
        v = value_orders[i, j]
        bit = (<mask_t> 1) << (v - 1)
        if not cand & bit:
            continue
        bd.cells[i] = v
        bd.rows[r] |= bit
        bd.cols[c] |= bit
        bd.boxes[b] |= bit
        if _fill_rec(bd, k + 1, value_orders):
            return 1
        bd.rows[r] &= ~bit
        bd.cols[c] &= ~bit
        bd.boxes[b] &= ~bit
        bd.cells[i] = 0
    return 0


def fill_complete(int[::1] cells, int side, int box_size, int[:, ::1] value_orders):
    cdef Board bd
    cdef int bad = _board_init(&bd, cells, side, box_size)
    cdef int ok = 0, i
    if not bad:
        ok = _fill_rec(&bd, 0, value_orders)
    if not ok:
        _board_free(&bd)
        return None
    arr = np.empty(bd.n, dtype=np.int32)
    for i in range(bd.n):
        arr[i] = bd.cells[i]
    _board_free(&bd)
    return arr
