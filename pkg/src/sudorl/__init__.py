"""Ordering-sensitive reward experiments on Sudoku trajectory data.

Pipeline: generate solver-order/random-order trajectory corpora, train a
small decoder-only Transformer on either ordering, post-train with
group-relative policy optimization under calibrated cell/ordering rewards,
and evaluate with greedy decoding.
"""

from .errors import (DataFormatError, InputError, NoSolutionError, NumericalError,
                     ProvenanceError, SudorlError)

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "InputError",
    "NoSolutionError",
    "NumericalError",
    "ProvenanceError",
    "SudorlError",
    "__version__",
]
