"""Exception hierarchy shared across the package."""


class MistakeLabError(Exception):
    """Base class for all package-specific errors."""


class DatasetError(MistakeLabError):
    """Malformed dataset file or record."""


class QuestionParseError(MistakeLabError):
    """A task question does not match the expected phrasing."""


class SolverError(MistakeLabError):
    """A task instance has no answer (or no unique answer)."""


class BackendError(MistakeLabError):
    """A text-generation backend call failed."""


class LocatorError(MistakeLabError):
    """A mistake-location strategy could not produce a location."""


class LocationParseError(LocatorError):
    """A prompted completion could not be parsed into a mistake location."""


class ProtocolError(MistakeLabError):
    """An annotation record violates the skip-after-first-incorrect protocol."""


class ZeroVarianceError(MistakeLabError):
    """Krippendorff's alpha is undefined: all observed labels are identical."""
