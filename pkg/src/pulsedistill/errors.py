"""Exception hierarchy shared by every subpackage."""


class PulseDistillError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PulseDistillError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(PulseDistillError, ValueError):
    """An argument is outside its allowed range."""


class ContractError(PulseDistillError, RuntimeError):
    """A call violated an API precondition (e.g. backward on a non-scalar)."""


class DegenerateSignalError(PulseDistillError, ValueError):
    """A signal has no usable variation (zero SD, all-zero frames...)."""


class UndefinedCorrelationError(PulseDistillError, ValueError):
    """Pearson correlation requested for a constant series."""


class ArchitectureError(PulseDistillError, ValueError):
    """Teacher and student topologies do not line up."""


class NonFiniteError(PulseDistillError, FloatingPointError):
    """A NaN or infinity appeared where finite values are required."""


class FileFormatError(PulseDistillError, ValueError):
    """Base class for on-disk format problems."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class ChecksumError(FileFormatError):
    """Stored checksum does not match the content."""


class TruncatedPayloadError(ChecksumError):
    """File ended before the declared payload was complete."""


class ValidationError(FileFormatError):
    """File parsed but its content violates the format's invariants."""
