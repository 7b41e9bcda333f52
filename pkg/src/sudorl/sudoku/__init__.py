"""Sudoku board representation, solvers, and puzzle generation."""

from .generate import generate_puzzle, random_complete_grid, shuffle_trajectory, solution_set
from .grid import (
    Grid,
    Move,
    Trajectory,
    apply_move,
    apply_trajectory,
    count_solutions,
    is_valid_placement,
    solve_all,
    solve_reference,
    trajectory_from_array,
    trajectory_to_flat,
)
from .kernels import backend_name

__all__ = [
    "Grid",
    "Move",
    "Trajectory",
    "apply_move",
    "apply_trajectory",
    "backend_name",
    "count_solutions",
    "generate_puzzle",
    "is_valid_placement",
    "random_complete_grid",
    "shuffle_trajectory",
    "solution_set",
    "solve_all",
    "solve_reference",
    "trajectory_from_array",
    "trajectory_to_flat",
]
