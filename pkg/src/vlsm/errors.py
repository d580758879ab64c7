"""Exception types shared across the package.

The CLI maps these onto exit codes, so pipeline code should raise the most
specific type that applies.
"""


class VlsmError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(VlsmError):
    """Invalid configuration (bad parameter values, malformed config file)."""


class DataError(VlsmError):
    """Invalid or inconsistent input data (geometry mismatch, bad cohort)."""


class NiftiFormatError(DataError):
    """A file does not conform to the supported NIfTI-1 layout."""


class NumericError(VlsmError):
    """Internal numerical failure (non-convergence, overflow)."""
