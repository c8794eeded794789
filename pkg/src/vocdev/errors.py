"""Exception hierarchy shared by all vocdev modules."""


class VocdevError(Exception):
    """Base class for every error raised by this package."""


class SignalTooShort(VocdevError):
    pass


class InsufficientData(VocdevError):
    pass


class UnknownProfile(VocdevError):
    pass


class FormatError(VocdevError):
    pass


class DimensionMismatch(VocdevError):
    pass


class FrozenModel(VocdevError):
    pass


class EmptyDataset(VocdevError):
    pass


class CapacityExhausted(VocdevError):
    pass


class EmptyLayer(VocdevError):
    pass


class NNotAvailable(VocdevError):
    pass


class NonFiniteValue(VocdevError):
    pass


class MissingLanguage(VocdevError):
    pass


class HashMismatch(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class ConfigError(VocdevError):
    pass


class IoError(VocdevError, OSError):
    pass
