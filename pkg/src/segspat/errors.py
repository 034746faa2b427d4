"""Exception types shared across the engine.

The CLI maps each family onto a stable exit code: input problems exit 2,
degenerate designs exit 3 and numerical failures exit 4.
"""


class SegspatError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class InputError(SegspatError):
    """Bad input data, configuration or arguments."""

    exit_code = 2


class SchemaError(InputError):
    """A required column is missing from an input table."""


class ParseError(InputError):
    """A value could not be parsed; carries the offending row index."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DataError(InputError):
    """Input values violate a data invariant (monotonicity, bounds, gaps)."""


class AlignmentError(InputError):
    """Series that must share a date range do not."""


class RegionMismatchError(InputError):
    """Unknown region key, or region sets that do not line up."""


class DegenerateDesignError(SegspatError):
    """The assembled design cannot identify the threshold effect."""

    exit_code = 3

    def __init__(self, message, threshold=None, lag=None):
        super().__init__(message)
        self.threshold = threshold
        self.lag = lag


class NumericalError(SegspatError):
    """A factorization or numeric check failed during fitting."""

    exit_code = 4

    def __init__(self, message, block=None, iteration=None):
        super().__init__(message)
        self.block = block
        self.iteration = iteration
