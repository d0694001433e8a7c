"""Exception types shared across the toolkit."""


class RoughCountError(Exception):
    """Base class for all toolkit errors."""


# vector / similarity layer

class ZeroVector(RoughCountError):
    """A vector with (near) zero norm where a direction is required."""


class DimensionMismatch(RoughCountError):
    """Operands whose dimensions are incompatible."""


class EmptyBatch(RoughCountError):
    """A batch operation received no elements."""


# loss layer

class StageCountMismatch(RoughCountError):
    """Stage-wise text batches do not form exactly three equal-length lists."""


class NonFiniteLoss(RoughCountError):
    """Training produced a NaN or infinite loss value."""


# digit codec

class OutOfRange(RoughCountError):
    """Count outside the supported [0, 999] range."""


class DigitOutOfRange(RoughCountError):
    """A digit outside [0, 9]."""


class MissingPriorDigit(RoughCountError):
    """A stage candidate set was requested without the digits it conditions on."""


# decoder

class ProviderFailure(RoughCountError):
    """A text-embedding provider failed to produce an embedding."""


# adapter

class EmptyStore(RoughCountError):
    """Query against an adapter store with no entries."""


# data generation

class BadRange(RoughCountError):
    """Invalid count range for dataset generation."""


# metrics

class LengthMismatch(RoughCountError):
    """Prediction and ground-truth sequences differ in length."""


class Empty(RoughCountError):
    """A metric was requested over an empty sequence."""


class OverlappingBands(RoughCountError):
    """Density intervals that overlap, leave gaps, or do not start at zero."""


# container format

class ContainerError(RoughCountError):
    """Base class for exchange-container format errors."""


class BadMagic(ContainerError):
    """File does not start with the container magic bytes."""


class VersionUnsupported(ContainerError):
    """Container format version this reader does not understand."""


class TruncatedPayload(ContainerError):
    """Declared section sizes exceed the bytes actually present."""


class DTypeUnknown(ContainerError):
    """Section dtype code outside the defined set."""


# experiment configuration

class ConfigError(RoughCountError):
    """Malformed experiment configuration; message carries file:line context."""
