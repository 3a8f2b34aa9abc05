"""Exception hierarchy mapped to CLI exit codes.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""


class CrosstalkError(Exception):
    exit_code = 2


class DataError(CrosstalkError):
    """Bad or inconsistent input data (files, formats, empty corpora)."""
    exit_code = 2


class RttmParseError(DataError):
    pass


class ManifestError(DataError):
    pass


class GenerationError(DataError):
    """Synthetic corpus request that cannot be satisfied."""
    pass


class NumericalError(CrosstalkError):
    exit_code = 3


class TrainingDivergedError(NumericalError):
    pass
