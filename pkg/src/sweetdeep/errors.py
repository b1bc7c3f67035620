"""Exception hierarchy shared by every stage of the pipeline.

``code`` is the CLI exit status of each failure family (2 is left to
argparse usage errors, 3 is a missing input file).
"""

MISSING_FILE_CODE = 3


class SweetDeepError(Exception):
    code = 1


class SchemaError(SweetDeepError, ValueError):
    """A file on disk does not match its documented format."""

    code = 4


class ConfigError(SweetDeepError, ValueError):
    code = 5


class ParameterError(SweetDeepError, ValueError):
    code = 6


class FeatureUnavailable(SweetDeepError):
    code = 7


class SplitError(SweetDeepError):
    code = 8


class RebalanceError(SweetDeepError):
    code = 9


class TrainingError(SweetDeepError):
    code = 10


class ModelLoadError(SweetDeepError):
    code = 11


class AggregationError(SweetDeepError):
    code = 12
