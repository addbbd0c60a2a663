"""Exception types shared across the package.

The command-line front end maps these onto process exit codes:
ConfigError -> 1, DataError -> 2, NumericalError -> 3.
"""


class SpangraphError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SpangraphError):
    """Invalid configuration: bad parameter values or malformed config file."""


class DataError(SpangraphError):
    """Invalid dataset: parse, range, or shape problems in input files."""


class NumericalError(SpangraphError):
    """Non-finite values encountered during training."""
