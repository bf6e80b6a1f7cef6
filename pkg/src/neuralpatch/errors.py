"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigurationError(EngineError):
    """A knob, shape, or layer selection violates the engine's contracts."""


class InputError(EngineError):
    """User-supplied data (image files, coordinates) is unusable."""


class WeightFormatError(EngineError):
    """A weight file is malformed or inconsistent with the architecture."""


class OptimizationError(EngineError):
    """The optimizer encountered a non-finite energy or gradient."""
