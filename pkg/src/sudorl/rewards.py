"""Cell-accuracy and ordering rewards, plus bootstrapped scale calibration.

The cell reward is order-insensitive set overlap.  The ordering reward sums,
over correctly predicted cells, 1 / (1 + |solver position - emitted
position|); it is a raw sum, deliberately unnormalized, and the calibrated
scales below make the two components commensurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import Vocabulary, decode_completion, encode
from .errors import InputError
from .model import ModelConfig, sample_batch
from .seeding import derive_rng
from .sudoku.grid import Trajectory

MEAN_FLOOR = 1e-8


def cell_accuracy(solution: Trajectory, predicted: Trajectory) -> tuple[float, int]:
    """(|correct placements| / |solution|, n_correct), ignoring order."""
    if not solution:
        raise InputError("solution trajectory is empty")
    sol = {(m.row, m.col, m.val) for m in solution}
    pred = {(m.row, m.col, m.val) for m in predicted}
    n_correct = len(sol & pred)
    return n_correct / len(sol), n_correct


def order_reward(solver: Trajectory, predicted: Trajectory) -> float:
    """Sum over correct cells of 1 / (1 + |solver index - emitted index|).

    Correct means the (row, col, val) placement appears in the solver
    trajectory.  Indices are 0-based; the emitted index counts kept predicted
    triplets, first occurrence of a cell winning.
    """
    if not solver:
        raise InputError("solver trajectory is empty")
    solver_pos: dict[tuple[int, int], int] = {}
    sol_set = set()
    for i, m in enumerate(solver):
        solver_pos.setdefault((m.row, m.col), i)
        sol_set.add((m.row, m.col, m.val))
    total = 0.0
    seen: set[tuple[int, int]] = set()
    for j, m in enumerate(predicted):
        cell = (m.row, m.col)
        if cell in seen:
            continue
        seen.add(cell)
        if (m.row, m.col, m.val) in sol_set:
            total += 1.0 / (1.0 + abs(solver_pos[cell] - j))
    return total


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-rollout reward components; r_order never exceeds n_correct."""

    r_cell: float
    r_order: float
    r_total: float
    n_correct: int


def compute_scales(alpha: float, mean_cell: float, mean_order: float) -> tuple[float, float]:
    """cell_scale = alpha / max(mean_cell, floor); order analogously with 1 - alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    cell_scale = alpha / max(mean_cell, MEAN_FLOOR)
    order_scale = (1.0 - alpha) / max(mean_order, MEAN_FLOOR)
    return cell_scale, order_scale


@dataclass(frozen=True)
class RewardScales:
    """Frozen calibration: reward scales plus the provenance they were fit on."""

    alpha: float
    cell_scale: float
    order_scale: float
    mean_cell: float
    mean_order: float
    checkpoint_sha256: str
    val_sha256: str

    def total(self, r_cell: float, r_order: float) -> float:
        return self.cell_scale * r_cell + self.order_scale * r_order

    def breakdown(self, solution: Trajectory, predicted: Trajectory) -> RewardBreakdown:
        r_cell, n_correct = cell_accuracy(solution, predicted)
        r_order = order_reward(solution, predicted)
        return RewardBreakdown(r_cell=r_cell, r_order=r_order,
                               r_total=self.total(r_cell, r_order), n_correct=n_correct)

    def to_json(self) -> str:
        return json.dumps({
            "alpha": self.alpha,
            "cell_scale": self.cell_scale,
            "order_scale": self.order_scale,
            "bootstrap_means": {"mean_cell": self.mean_cell, "mean_order": self.mean_order},
            "provenance": {"checkpoint_sha256": self.checkpoint_sha256,
                           "val_sha256": self.val_sha256},
        }, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RewardScales":
        try:
            doc = json.loads(text)
            means = doc["bootstrap_means"]
            prov = doc["provenance"]
            return cls(
                alpha=float(doc["alpha"]),
                cell_scale=float(doc["cell_scale"]),
                order_scale=float(doc["order_scale"]),
                mean_cell=float(means["mean_cell"]),
                mean_order=float(means["mean_order"]),
                checkpoint_sha256=str(prov["checkpoint_sha256"]),
                val_sha256=str(prov["val_sha256"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid reward-scales JSON: {exc}") from exc

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RewardScales":
        path = Path(path)
        try:
            return cls.from_json(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read reward scales {path}: {exc}") from exc


def bootstrap_scales(params, config: ModelConfig, vocab: Vocabulary, records, *,
                     alpha: float, seed: int, max_new: int = 186,
                     temperature: float = 1.0, checkpoint_sha256: str = "",
                     val_sha256: str = "", batch_size: int = 32) -> RewardScales:
    """One temperature-1 sampled pass over validation fixes the reward scales.

    Each record gets a single completion, seeded by (seed, record id), so the
    calibration is reproducible.  Means of the two raw rewards across records
    set the scales via compute_scales; the result is frozen for the whole
    post-training run.
    """
    records = list(records)
    if not records:
        raise InputError("cannot calibrate scales on an empty record set")
    by_len: dict[int, list] = {}
    for rec in records:
        seq = encode(rec, "solver", vocab)
        by_len.setdefault(seq.prompt_len, []).append((rec, seq))

    cells, orders = [], []
    for plen in sorted(by_len):
        bucket = by_len[plen]
        for lo in range(0, len(bucket), batch_size):
            chunk = bucket[lo:lo + batch_size]
            prompts = np.stack([seq.ids[:plen] for _, seq in chunk])
            rngs = [derive_rng(seed, "bootstrap", rec.id) for rec, _ in chunk]
            comps = sample_batch(params, config, prompts, mode="categorical",
                                 temperature=temperature, rngs=rngs, max_new=max_new)
            for (rec, _), comp in zip(chunk, comps):
                predicted = decode_completion(comp, vocab)
                r_cell, _ = cell_accuracy(rec.solver_order, predicted)
                cells.append(r_cell)
                orders.append(order_reward(rec.solver_order, predicted))
    mean_cell = float(np.mean(cells))
    mean_order = float(np.mean(orders))
    cell_scale, order_scale = compute_scales(alpha, mean_cell, mean_order)
    return RewardScales(alpha=alpha, cell_scale=cell_scale, order_scale=order_scale,
                        mean_cell=mean_cell, mean_order=mean_order,
                        checkpoint_sha256=checkpoint_sha256, val_sha256=val_sha256)
