"""Exception hierarchy.

Every exception carries the CLI exit code it maps to, so the command line
front-end can translate failures without a lookup table.
"""


class PidlError(Exception):
    exit_code = 1


class ConfigError(PidlError, ValueError):
    exit_code = 2


class DivergenceError(PidlError, FloatingPointError):
    exit_code = 3


class DataError(PidlError, ValueError):
    exit_code = 4


class EmptyResultError(DataError):
    pass


class SingularSpacingError(DataError):
    pass


class CollisionError(DataError):
    pass


class GenerationExhaustedError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class UnsupportedFamilyError(ConfigError):
    pass
