class ConfigurationError(ValueError):
    """Invalid code, channel, decoder or simulation parameters."""


class CalibrationError(RuntimeError):
    """Static threshold calibration saw no correctly decoded frame."""


class UnsupportedConstructionError(ValueError):
    """An operation needs a reliability profile of a different kind."""
