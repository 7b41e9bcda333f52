"""Token codec: puzzle records <-> id sequences, plus the loss mask.

Layout: BOS, given-cell triplets in row-major order, SEP, trajectory triplets
in order, EOS, PAD...  Each triplet is three tokens: row index, column index,
cell value.  Index and value digits are separate token families so a decoded
triplet is well-typed by construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .sudoku import Grid, Move, Trajectory

PAD, BOS, SEP, EOS = 0, 1, 2, 3
_SPECIALS = ("PAD", "BOS", "SEP", "EOS")


@dataclass(frozen=True)
class Vocabulary:
    """Dense token table for one board size.

    ids: 4 specials, then value digits V0..V<side>, then index digits
    I0..I<side-1> shared by rows and columns.
    """

    side: int

    @property
    def size(self) -> int:
        return 4 + (self.side + 1) + self.side

    def val_token(self, v: int) -> int:
        if not (0 <= v <= self.side):
            raise InputError(f"cell value {v} out of range 0..{self.side}")
        return 4 + v

    def idx_token(self, i: int) -> int:
        if not (0 <= i < self.side):
            raise InputError(f"index {i} out of range 0..{self.side - 1}")
        return 4 + self.side + 1 + i

    def token_name(self, tok: int) -> str:
        if tok < 4:
            return _SPECIALS[tok]
        if tok <= 4 + self.side:
            return f"V{tok - 4}"
        return f"I{tok - 5 - self.side}"

    def value_of(self, tok: int) -> int | None:
        """Cell value for a value token, else None."""
        return tok - 4 if 4 <= tok <= 4 + self.side else None

    def index_of(self, tok: int) -> int | None:
        """Board index for an index token, else None."""
        lo = 5 + self.side
        return tok - lo if lo <= tok < lo + self.side else None

    def dump(self) -> str:
        """token<TAB>id table; stable identity for compatibility checks."""
        lines = [f"{self.token_name(t)}\t{t}" for t in range(self.size)]
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


@dataclass
class TokenSequence:
    ids: np.ndarray          # int32, padded to max length
    loss_mask: np.ndarray    # bool, True = position contributes to the loss
    prompt_len: int          # index just after SEP


def max_sequence_length(side: int) -> int:
    """Every cell appears in exactly one region, so length is fixed:
    BOS + 3*givens + SEP + 3*blanks + EOS = 3*side^2 + 3."""
    return 3 * side * side + 3


def encode(record, order: str, vocab: Vocabulary, max_len: int | None = None) -> TokenSequence:
    """Tokenize one record using its solver or random move order."""
    if order not in ("solver", "random"):
        raise InputError(f"order must be 'solver' or 'random', got {order!r}")
    traj = record.solver_order if order == "solver" else record.random_order
    grid = record.puzzle
    if grid.side != vocab.side:
        raise InputError(f"record side {grid.side} does not match vocabulary side {vocab.side}")
    if max_len is None:
        max_len = max_sequence_length(vocab.side)

    ids = [BOS]
    for r in range(grid.side):
        for c in range(grid.side):
            v = int(grid.cells[r, c])
            if v != 0:
                ids.extend((vocab.idx_token(r), vocab.idx_token(c), vocab.val_token(v)))
    ids.append(SEP)
    prompt_len = len(ids)
    for m in traj:
        ids.extend((vocab.idx_token(m.row), vocab.idx_token(m.col), vocab.val_token(m.val)))
    ids.append(EOS)
    if len(ids) > max_len:
        raise InputError(f"encoded length {len(ids)} exceeds max length {max_len}")

    arr = np.full(max_len, PAD, dtype=np.int32)
    arr[:len(ids)] = ids
    mask = np.zeros(max_len, dtype=bool)
    mask[prompt_len:len(ids)] = True
    return TokenSequence(ids=arr, loss_mask=mask, prompt_len=prompt_len)


def decode_completion(ids, vocab: Vocabulary) -> Trajectory:
    """Parse sampled ids into moves; total over arbitrary input.

    Consecutive 3-token frames up to the first EOS are read as
    (row, col, val); frames with a wrong token kind, a zero value, or a
    repeated (row, col) are dropped (first occurrence wins).
    """
    ids = np.asarray(ids).reshape(-1)
    stop = np.flatnonzero(ids == EOS)
    body = ids[:int(stop[0])] if len(stop) else ids
    moves: list[Move] = []
    taken: set[tuple[int, int]] = set()
    for k in range(0, len(body) - 2, 3):
        r = vocab.index_of(int(body[k]))
        c = vocab.index_of(int(body[k + 1]))
        v = vocab.value_of(int(body[k + 2]))
        if r is None or c is None or v is None or v == 0:
            continue
        if (r, c) in taken:
            continue
        taken.add((r, c))
        moves.append(Move(r, c, v))
    return tuple(moves)
