"""Board state, move/trajectory types, and the solver entry points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import InputError, NoSolutionError
from . import kernels


class Move(NamedTuple):
    row: int
    col: int
    val: int


Trajectory = tuple[Move, ...]


@dataclass
class Grid:
    """side x side board; 0 marks a blank cell."""

    side: int = 9
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]
    box_size: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        box = math.isqrt(self.side)
        if box * box != self.side:
            raise InputError(f"side must be a perfect square, got {self.side}")
        if self.box_size is None:
            self.box_size = box
        elif self.box_size != box:
            raise InputError(f"box_size {self.box_size} does not match side {self.side}")
        if self.cells is None:
            self.cells = np.zeros((self.side, self.side), dtype=np.int32)
        else:
            self.cells = np.asarray(self.cells, dtype=np.int32).reshape(self.side, self.side)
            if self.cells.min() < 0 or self.cells.max() > self.side:
                raise InputError("cell values must lie in 0..side")

    @classmethod
    def from_line(cls, line: str, side: int = 9) -> "Grid":
        """Parse a row-major digit string ('0' = blank); sides up to 9 only."""
        if side > 9:
            raise InputError("digit-string encoding supports side <= 9")
        if len(line) != side * side or not line.isdigit():
            raise InputError(f"expected {side * side} digits, got {line!r}")
        return cls(side=side, cells=np.array([int(ch) for ch in line], dtype=np.int32))

    def to_line(self) -> str:
        if self.side > 9:
            raise InputError("digit-string encoding supports side <= 9")
        return "".join(str(int(v)) for v in self.cells.reshape(-1))

    def copy(self) -> "Grid":
        return Grid(side=self.side, cells=self.cells.copy())

    def given_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def blank_count(self) -> int:
        return self.side * self.side - self.given_count()

    def is_complete(self) -> bool:
        return self.blank_count() == 0

    def is_consistent(self) -> bool:
        """True iff no nonzero value repeats within a row, column, or box."""
        b = self.box_size
        for r in range(self.side):
            if _has_dup(self.cells[r, :]):
                return False
        for c in range(self.side):
            if _has_dup(self.cells[:, c]):
                return False
        for br in range(b):
            for bc in range(b):
                if _has_dup(self.cells[br * b:(br + 1) * b, bc * b:(bc + 1) * b].reshape(-1)):
                    return False
        return True

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.side == other.side
                and np.array_equal(self.cells, other.cells))


def _has_dup(values: np.ndarray) -> bool:
    nz = values[values != 0]
    return len(np.unique(nz)) != len(nz)


def is_valid_placement(grid: Grid, move: Move) -> bool:
    """True iff the cell is blank and the value conflicts with no peer."""
    r, c, v = move
    if not (0 <= r < grid.side and 0 <= c < grid.side):
        raise InputError(f"move indices out of bounds: {move}")
    if not (1 <= v <= grid.side):
        raise InputError(f"move value out of range: {move}")
    if grid.cells[r, c] != 0:
        return False
    if v in grid.cells[r, :] or v in grid.cells[:, c]:
        return False
    b = grid.box_size
    box = grid.cells[(r // b) * b:(r // b + 1) * b, (c // b) * b:(c // b + 1) * b]
    return v not in box


def apply_move(grid: Grid, move: Move) -> None:
    """Place the move in-place; raises if it violates the board invariants."""
    if not is_valid_placement(grid, move):
        raise InputError(f"illegal placement {move}")
    grid.cells[move.row, move.col] = move.val


def apply_trajectory(grid: Grid, moves: Trajectory) -> Grid:
    """Fresh grid with every move applied in order; validates each step."""
    out = grid.copy()
    for m in moves:
        apply_move(out, m)
    return out


def trajectory_from_array(arr) -> Trajectory:
    return tuple(Move(int(r), int(c), int(v)) for r, c, v in np.asarray(arr).reshape(-1, 3))


def trajectory_to_flat(moves: Trajectory) -> list[int]:
    return [x for m in moves for x in m]


def solve_reference(puzzle: Grid) -> Trajectory:
    """Deterministic fill order for every blank cell.

    Repeatedly fills the blank with the fewest candidates (row-major ties);
    when several candidates remain, branches depth-first on ascending values
    and keeps only the successful branch.
    """
    moves = kernels.solve_reference(puzzle.cells, puzzle.side, puzzle.box_size)
    if moves is None:
        raise NoSolutionError("puzzle has no solution")
    return trajectory_from_array(moves)


def solve_all(puzzle: Grid, limit: int) -> list[Grid]:
    """Up to ``limit`` complete solutions, in row-major/ascending order."""
    if limit < 1:
        raise InputError(f"limit must be >= 1, got {limit}")
    sols = kernels.solve_all(puzzle.cells, puzzle.side, puzzle.box_size, limit)
    return [Grid(side=puzzle.side, cells=s) for s in sols]


def count_solutions(puzzle: Grid, limit: int) -> int:
    if limit < 1:
        raise InputError(f"limit must be >= 1, got {limit}")
    return kernels.count_solutions(puzzle.cells, puzzle.side, puzzle.box_size, limit)
