"""Exception hierarchy shared across the toolkit.

Validation errors (bad inputs, bad files, bad configs) derive from
ValidationError so the CLI can map them to exit code 1; everything else
that goes wrong at runtime (numerical failures, diverged training) derives
from RuntimeFailure and maps to exit code 2.
"""


class TaclearnError(Exception):
    """Base class for all errors raised by taclearn."""


class ValidationError(TaclearnError):
    """Bad user input: files, dimensions, configs, parameter ranges."""


class RuntimeFailure(TaclearnError):
    """Operation started but could not complete (numerics, divergence)."""
