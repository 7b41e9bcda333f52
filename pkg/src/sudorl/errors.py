"""Exception hierarchy shared by the library and the CLI.

Each class maps to one CLI exit code so batch callers can dispatch on the
error class printed to stderr.
"""


class SudorlError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    error_class = "error"


class InputError(SudorlError):
    """Bad arguments, malformed files, violated preconditions."""

    exit_code = 2
    error_class = "input-error"


class NoSolutionError(InputError):
    """Puzzle handed to the reference solver has no solution."""

    error_class = "no-solution"


class DataFormatError(InputError):
    """Corpus line failed to parse; carries the offending line number."""

    error_class = "data-format-error"

    def __init__(self, path, line_no, reason):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class NumericalError(SudorlError):
    """NaN or other numerical failure during training."""

    exit_code = 3
    error_class = "numerical-error"


class ProvenanceError(SudorlError):
    """Artifact hashes disagree with what a dependent run was calibrated on."""

    exit_code = 4
    error_class = "provenance-mismatch"
