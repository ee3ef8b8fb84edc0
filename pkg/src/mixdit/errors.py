"""Exception taxonomy shared across the package."""


class MixditError(Exception):
    """Base class for all package-specific failures."""


class DimensionError(MixditError, ValueError):
    """A tensor extent or divisibility requirement was violated."""


class InputError(MixditError, ValueError):
    """A runtime input (ids, timestep, task name, ...) is out of contract."""


class ConfigError(MixditError, ValueError):
    """A configuration value is inconsistent or unusable."""


class ContractError(MixditError, RuntimeError):
    """An internal structural invariant between components was violated."""


class CheckpointError(MixditError, RuntimeError):
    """A checkpoint file is malformed or does not match the config."""
