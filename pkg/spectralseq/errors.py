"""Exception types raised across spectralseq.

Every error is also a ``ValueError`` or ``RuntimeError`` so plain ``except
ValueError`` callers keep working.
"""


class SpectralSeqError(Exception):
    """Base class for all spectralseq errors."""


class ShapeError(SpectralSeqError, ValueError):
    """Array shapes do not fit the operation."""


class ConfigError(SpectralSeqError, ValueError):
    """A configuration value is out of range or inconsistent."""


class GraphStateError(SpectralSeqError, RuntimeError):
    """Backward requested on something that has no recorded forward pass."""


class DivergenceError(SpectralSeqError, RuntimeError):
    """A loss or a solver state became NaN/Inf.

    Attributes
    ----------
    epoch, batch, lr : optional
        Where training diverged.
    step : int, optional
        Where a solver diverged.
    """

    def __init__(self, message, *, epoch=None, batch=None, lr=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        self.step = step


class DatasetFormatError(SpectralSeqError, ValueError):
    """File contents do not match the container format (e.g. header dims vs payload)."""


class BadMagicError(DatasetFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(DatasetFormatError):
    """Format version byte is not one this library reads."""


class TruncatedFileError(DatasetFormatError):
    """File ends before the declared content."""
