"""Held-out evaluation: greedy decoding plus cell and ordering metrics.

Cell accuracy is the primary metric, reported as the macro average of
per-record ratios; the pooled (micro) figure is logged alongside.  Ordering
diagnostics report the raw order reward and its per-record normalization by
solution size.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .codec import Vocabulary, decode_completion, encode
from .errors import InputError, ProvenanceError
from .model import ModelConfig, sample_batch
from .rewards import cell_accuracy, order_reward
from .sudoku.grid import Trajectory


@dataclass(frozen=True)
class EvalReport:
    cell_accuracy: float
    cell_accuracy_micro: float
    full_solve_rate: float
    mean_order_reward: float
    mean_normalized_order: float
    n_records: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def summary(self) -> str:
        return (f"records {self.n_records}  cell_accuracy {self.cell_accuracy:.4f}  "
                f"(micro {self.cell_accuracy_micro:.4f})  "
                f"full_solve_rate {self.full_solve_rate:.4f}  "
                f"mean_order_reward {self.mean_order_reward:.4f}  "
                f"mean_normalized_order {self.mean_normalized_order:.4f}")


def greedy_decode_records(params, config: ModelConfig, vocab: Vocabulary, records, *,
                          max_new: int = 186, batch_size: int = 64) -> list[Trajectory]:
    """Greedy completions for every record, in record order.

    Records are bucketed by prompt length so each batch shares positions; the
    result list aligns with the input order regardless of bucketing.
    """
    records = list(records)
    by_len: dict[int, list[tuple[int, np.ndarray]]] = {}
    for pos, rec in enumerate(records):
        seq = encode(rec, "solver", vocab)
        by_len.setdefault(seq.prompt_len, []).append((pos, seq.ids[:seq.prompt_len]))
    out: list[Trajectory | None] = [None] * len(records)
    for plen in sorted(by_len):
        bucket = by_len[plen]
        for lo in range(0, len(bucket), batch_size):
            chunk = bucket[lo:lo + batch_size]
            prompts = np.stack([ids for _, ids in chunk])
            comps = sample_batch(params, config, prompts, mode="greedy", max_new=max_new)
            for (pos, _), comp in zip(chunk, comps):
                out[pos] = decode_completion(comp, vocab)
    return out  # type: ignore[return-value]


def score_trajectories(records, trajectories) -> EvalReport:
    """Aggregate reward metrics for aligned (record, predicted) pairs."""
    records = list(records)
    if not records:
        raise InputError("cannot evaluate an empty record set")
    if len(trajectories) != len(records):
        raise InputError("record/trajectory count mismatch")
    cells, orders, normalized = [], [], []
    solved = 0
    pooled_correct = 0
    pooled_total = 0
    for rec, pred in zip(records, trajectories):
        solution = rec.solver_order
        r_cell, n_correct = cell_accuracy(solution, pred)
        r_order = order_reward(solution, pred)
        cells.append(r_cell)
        orders.append(r_order)
        normalized.append(r_order / len(solution))
        solved += r_cell == 1.0
        pooled_correct += n_correct
        pooled_total += len(solution)
    return EvalReport(
        cell_accuracy=float(np.mean(cells)),
        cell_accuracy_micro=pooled_correct / pooled_total,
        full_solve_rate=solved / len(records),
        mean_order_reward=float(np.mean(orders)),
        mean_normalized_order=float(np.mean(normalized)),
        n_records=len(records),
    )


def evaluate(params, config: ModelConfig, vocab: Vocabulary, records, *,
             max_new: int = 186, batch_size: int = 64, limit: int | None = None) -> EvalReport:
    """Greedy-decode and score a record stream; deterministic, read-only."""
    records = list(records)
    if limit is not None:
        records = records[:limit]
    if not records:
        raise InputError("cannot evaluate an empty record set")
    trajectories = greedy_decode_records(params, config, vocab, records,
                                         max_new=max_new, batch_size=batch_size)
    return score_trajectories(records, trajectories)


def check_vocab(ckpt: Checkpoint, vocab: Vocabulary) -> None:
    """Refuse to score a checkpoint against a vocabulary it was not trained on."""
    if ckpt.vocab_hash and ckpt.vocab_hash != vocab.sha256():
        raise ProvenanceError(
            f"checkpoint vocabulary hash {ckpt.vocab_hash[:12]} does not match "
            f"data vocabulary hash {vocab.sha256()[:12]}")


def evaluate_checkpoint(ckpt: Checkpoint, vocab: Vocabulary, records, *,
                        max_new: int = 186, batch_size: int = 64,
                        limit: int | None = None) -> EvalReport:
    check_vocab(ckpt, vocab)
    return evaluate(ckpt.params, ckpt.config, vocab, records,
                    max_new=max_new, batch_size=batch_size, limit=limit)


def write_report(path, report: EvalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
