"""Exception taxonomy shared by all iotuner modules."""


class IoTunerError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(IoTunerError):
    """Operand dimensions do not compose."""


class NumericError(IoTunerError):
    """Non-finite value where a finite one is required."""


class StateError(IoTunerError):
    """Operation called out of sequence (e.g. backward before forward)."""


class IngestError(IoTunerError):
    """Malformed or mis-ordered trace input."""


class ConfigError(IoTunerError):
    """Invalid CLI flag or config-file combination."""


class ReservationError(IoTunerError):
    """Memory reservation request exceeds the pool."""


class ModelFileError(IoTunerError):
    """Base class for deployment-file problems."""


class ModelFormatError(ModelFileError):
    """Bad magic or unknown structural field."""


class ModelVersionError(ModelFileError):
    """Format version not supported by this build."""


class ModelCorruptionError(ModelFileError):
    """Truncated body or checksum mismatch."""
