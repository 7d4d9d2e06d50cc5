"""Exception hierarchy shared by every part of the package."""


class MgbrError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 1


class DimensionError(MgbrError, ValueError):
    exit_code = 4


class StructuralError(MgbrError, ValueError):
    exit_code = 3


class DomainError(MgbrError, ValueError):
    exit_code = 4


class ContractError(MgbrError, ValueError):
    exit_code = 4


class ParseError(MgbrError, ValueError):
    exit_code = 3


class ValidationError(MgbrError, ValueError):
    exit_code = 3


class DataError(MgbrError, ValueError):
    exit_code = 3


class SamplingError(DataError):
    pass


class IdLookupError(MgbrError, IndexError):
    exit_code = 3


class CompatibilityError(MgbrError, ValueError):
    exit_code = 3


class ConfigError(MgbrError, ValueError):
    exit_code = 2


class DivergenceError(MgbrError, FloatingPointError):
    exit_code = 4


class CheckpointError(MgbrError, ValueError):
    exit_code = 3
