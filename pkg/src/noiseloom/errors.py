"""Exception hierarchy shared by all noiseloom modules."""


class NoiseLoomError(Exception):
    """Base class for all engine errors."""


class GeometryError(NoiseLoomError, ValueError):
    """Shapes, regions or block grids do not line up."""


class DegenerateInputError(NoiseLoomError, ValueError):
    """Structurally valid input that cannot be meant (e.g. an empty resample mask)."""


class PermutationError(NoiseLoomError, ValueError):
    """A block occurs more than once in a swap list."""


class PairingError(NoiseLoomError, ValueError):
    """Inbound/outbound lists cannot be paired one-to-one."""


class GuidanceError(NoiseLoomError, ValueError):
    """Layout guidance is inconsistent (unknown category, overlapping regions, ...)."""


class ConfigError(NoiseLoomError, ValueError):
    """A parameter is outside its documented range."""


class IngestError(NoiseLoomError, ValueError):
    """An input file could not be parsed."""
