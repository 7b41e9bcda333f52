"""Seeded puzzle generation with a uniqueness guarantee."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..seeding import derive_rng
from . import kernels
from .grid import Grid, Move, Trajectory, solve_reference, trajectory_from_array


def random_complete_grid(rng: np.random.Generator, side: int = 9) -> Grid:
    """Complete grid from randomized backtracking (per-cell value orders)."""
    n = side * side
    base = np.tile(np.arange(1, side + 1, dtype=np.int32), (n, 1))
    value_orders = rng.permuted(base, axis=1)
    empty = Grid(side=side)
    filled = kernels.fill_complete(empty.cells, side, empty.box_size, value_orders)
    if filled is None:  # empty grid is always completable
        raise AssertionError("randomized fill failed on an empty grid")
    return Grid(side=side, cells=filled)


def generate_puzzle(rng_seed: int, target_givens: int, side: int = 9) -> tuple[Grid, Trajectory]:
    """Unique-solution puzzle plus its reference-solver trajectory.

    Fills a complete grid with seeded randomized backtracking, then walks the
    cells in a seeded random order removing values, skipping any removal that
    would admit a second solution, until ``target_givens`` remain or every
    cell has been tried.  More than ``target_givens`` givens may remain when
    uniqueness forces it.  Pure function of (seed, target, side).
    """
    n = side * side
    if not (0 <= target_givens <= n):
        raise InputError(f"target_givens must be in 0..{n}, got {target_givens}")
    rng = derive_rng(rng_seed, "generate", side, target_givens)
    full = random_complete_grid(rng, side=side)
    cells = full.cells.reshape(-1).copy()
    box_size = full.box_size
    givens = n
    for idx in rng.permutation(n):
        if givens <= target_givens:
            break
        saved = cells[idx]
        cells[idx] = 0
        if kernels.count_solutions(cells, side, box_size, 2) == 1:
            givens -= 1
        else:
            cells[idx] = saved
    puzzle = Grid(side=side, cells=cells)
    return puzzle, solve_reference(puzzle)


def shuffle_trajectory(traj: Trajectory, rng_seed: int) -> Trajectory:
    """Seeded uniform permutation of the move list."""
    rng = derive_rng(rng_seed, "shuffle")
    order = rng.permutation(len(traj))
    return tuple(traj[i] for i in order)


def solution_set(traj: Trajectory) -> frozenset[Move]:
    """The trajectory's moves as an order-free set of triplets."""
    return frozenset(traj)
