"""Exception types shared by the toolkit.

Each error carries the process exit code the command line reports for it.
"""


class FactorLabError(ValueError):
    """Base class for toolkit errors."""

    exit_code = 1


class InputFormatError(FactorLabError):
    """Malformed manifest, CSV, flag value or unknown identifier."""

    exit_code = 2


class DesignConsistencyError(FactorLabError):
    """Outcome data that does not match the declared design."""

    exit_code = 3


class StatisticalModelError(FactorLabError):
    """A statistic that cannot be computed for the given data."""

    exit_code = 4
