from typing import Optional


class OISAError(Exception):
    """Base class for all errors raised by this package"""
    exit_code = 1


class ConfigError(OISAError):
    """Invalid or inconsistent configuration"""
    exit_code = 2


class CheckpointVersionError(ConfigError):
    """Checkpoint written by an incompatible format version or config"""


class DataError(OISAError):
    """Malformed or inconsistent data"""
    exit_code = 3


class SchemaError(DataError):
    """A record violates the manifest schema"""

    def __init__(self, message: str, sample_id: Optional[str] = None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"[{sample_id}] {message}"
        super().__init__(message)


class MaskCodecError(DataError):
    """A mask grid could not be run-length encoded"""

    def __init__(self, message: str, cell: Optional[tuple] = None):
        self.cell = cell
        super().__init__(message)


class CompositionError(DataError):
    """An expression could not be turned into prompt tokens"""


class ContextOverflowError(DataError):
    """An assembled prompt does not fit the language model context"""

    def __init__(self, message: str, lengths: Optional[dict] = None):
        self.lengths = lengths or {}
        super().__init__(message)


class NumericError(OISAError):
    """Non-finite loss or activations"""
    exit_code = 4

    def __init__(self, message: str, batch_id: Optional[str] = None):
        self.batch_id = batch_id
        super().__init__(message)
