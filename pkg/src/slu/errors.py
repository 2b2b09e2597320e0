"""Exception types shared across the toolkit."""


class SluError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SluError):
    """Malformed input file: bad JSON, bad vocab header, wrong field type."""


class ValidationError(SluError):
    """Well-formed input that violates a dataset or metric contract."""


class DimensionError(SluError):
    """Matrix shapes or sequence lengths do not line up."""


class AudioFormatError(SluError):
    """WAV data is not 16-bit PCM mono, or is otherwise unusable."""


class DecodeError(SluError):
    """Decoding produced no hypothesis."""


class NumericError(SluError):
    """Non-finite value encountered during training or gradient computation."""
