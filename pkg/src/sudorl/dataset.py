"""Corpus materialization: (puzzle, solver-order, random-order) records as JSONL.

One record per line: ``id``, ``side``, ``givens`` (row-major digit string,
0 = blank), and the two orderings as flat ``[r, c, v, ...]`` lists with
0-based indices.  The split is carried by the file (train/val/test.jsonl).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import DataFormatError, InputError
from .seeding import derive_rng, derive_seed
from .sudoku import (
    Grid,
    Trajectory,
    apply_trajectory,
    count_solutions,
    generate_puzzle,
    shuffle_trajectory,
    solve_all,
    trajectory_from_array,
    trajectory_to_flat,
)

SPLITS = ("train", "val", "test")


@dataclass
class CorpusConfig:
    n_train: int = 2000
    n_val: int = 512
    n_test: int = 512
    givens_min: int = 28
    givens_max: int = 40
    seed: int = 0
    side: int = 9

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise InputError("split sizes must be >= 0")
        n = self.side * self.side
        if not (0 <= self.givens_min <= self.givens_max <= n):
            raise InputError(
                f"need 0 <= givens_min <= givens_max <= {n}, "
                f"got [{self.givens_min}, {self.givens_max}]")


@dataclass
class PuzzleRecord:
    id: str
    puzzle: Grid
    solver_order: Trajectory
    random_order: Trajectory
    split: str

    def check_invariants(self) -> None:
        """Same move multiset in both orders; both complete the puzzle validly."""
        if sorted(self.solver_order) != sorted(self.random_order):
            raise InputError(f"record {self.id}: orderings disagree on the move multiset")
        for traj in (self.solver_order, self.random_order):
            final = apply_trajectory(self.puzzle, traj)
            if not final.is_complete():
                raise InputError(f"record {self.id}: trajectory does not complete the puzzle")

    def revalidate_with_oracle(self) -> None:
        """Exhaustive check: unique solution, reached by replaying solver order."""
        sols = solve_all(self.puzzle, 2)
        if len(sols) != 1:
            raise InputError(f"record {self.id}: expected a unique solution, found {len(sols)}")
        if apply_trajectory(self.puzzle, self.solver_order) != sols[0]:
            raise InputError(f"record {self.id}: solver order does not reach the unique solution")

    def to_json_line(self) -> str:
        doc = {
            "id": self.id,
            "side": self.puzzle.side,
            "givens": self.puzzle.to_line(),
            "solver_order": trajectory_to_flat(self.solver_order),
            "random_order": trajectory_to_flat(self.random_order),
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str, split: str, path="<memory>", line_no=0) -> "PuzzleRecord":
        try:
            doc = json.loads(line)
            side = int(doc["side"])
            puzzle = Grid.from_line(doc["givens"], side=side)
            solver = _parse_flat(doc["solver_order"])
            random_ = _parse_flat(doc["random_order"])
            return cls(id=str(doc["id"]), puzzle=puzzle, solver_order=solver,
                       random_order=random_, split=split)
        except DataFormatError:
            raise
        except Exception as exc:
            raise DataFormatError(path, line_no, str(exc)) from exc


def _parse_flat(flat) -> Trajectory:
    if len(flat) % 3 != 0:
        raise ValueError(f"trajectory list length {len(flat)} is not a multiple of 3")
    return trajectory_from_array(flat)


def generate_records(config: CorpusConfig) -> dict[str, list[PuzzleRecord]]:
    """Deterministic disjoint splits; duplicates (by givens string) are skipped."""
    wanted = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    out: dict[str, list[PuzzleRecord]] = {s: [] for s in SPLITS}
    seen: set[str] = set()
    givens_rng = derive_rng(config.seed, "givens-targets")
    i = 0
    for split in SPLITS:
        while len(out[split]) < wanted[split]:
            target = int(givens_rng.integers(config.givens_min, config.givens_max + 1))
            puzzle, solver = generate_puzzle(
                derive_seed(config.seed, "record", i), target, side=config.side)
            shuffle_seed = derive_seed(config.seed, "record-shuffle", i)
            i += 1
            line = puzzle.to_line()
            if line in seen:
                continue
            seen.add(line)
            random_ = shuffle_trajectory(solver, shuffle_seed)
            rec = PuzzleRecord(
                id=f"{split}-{len(out[split]):06d}",
                puzzle=puzzle, solver_order=solver, random_order=random_, split=split)
            out[split].append(rec)
    return out


def build_corpus(config: CorpusConfig, out_dir) -> dict[str, Path]:
    """Write train/val/test JSONL plus meta.json; byte-identical per config."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create corpus directory {out_dir}: {exc}") from exc
    records = generate_records(config)
    paths: dict[str, Path] = {}
    for split in SPLITS:
        path = out_dir / f"{split}.jsonl"
        _write_lines(path, [r.to_json_line() for r in records[split]])
        paths[split] = path
    meta = {
        "side": config.side,
        "n_train": config.n_train, "n_val": config.n_val, "n_test": config.n_test,
        "givens_min": config.givens_min, "givens_max": config.givens_max,
        "seed": config.seed,
    }
    meta_path = out_dir / "meta.json"
    _write_lines(meta_path, [json.dumps(meta, indent=2)])
    paths["meta"] = meta_path
    return paths


def _write_lines(path: Path, lines: list[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def load_corpus(path, split: str | None = None) -> Iterator[PuzzleRecord]:
    """Yield records in file order; the split defaults to the filename stem."""
    path = Path(path)
    if split is None:
        stem = path.stem
        split = stem if stem in SPLITS else "train"
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read corpus file {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            yield PuzzleRecord.from_json_line(line, split, path=str(path), line_no=line_no)


def load_split(data_dir, split: str) -> list[PuzzleRecord]:
    return list(load_corpus(Path(data_dir) / f"{split}.jsonl", split=split))


def read_meta(data_dir) -> dict:
    path = Path(data_dir) / "meta.json"
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read corpus meta {path}: {exc}") from exc
