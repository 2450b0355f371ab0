"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes (2 = input/schema, 3 = numerical,
4 = configuration), so library code should raise the most specific class.
"""


class OrchardcastError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(OrchardcastError):
    """Malformed or inconsistent input data (files, tables, arities)."""


class NumericalError(OrchardcastError):
    """A computation cannot proceed (singular system, undefined metric)."""


class ConfigError(OrchardcastError):
    """Invalid configuration (bad window spec, bad learner parameters)."""
