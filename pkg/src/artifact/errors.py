"""Exception hierarchy shared across the toolkit."""


class ArtifactError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ArtifactError, ValueError):
    """An argument violates its documented range or relationship."""


class DimensionMismatchError(ArtifactError, ValueError):
    """Two rasters that must share dimensions do not."""


class EmptyRegionError(ArtifactError, ValueError):
    """An operation was given an empty region/mask where pixels are required."""


class DegenerateConfigurationError(ArtifactError, ValueError):
    """Control points are too few or collinear for a TPS solve."""


class InsufficientCorrespondenceError(ArtifactError, ValueError):
    """Fewer than the minimum confident common joints for cloth alignment."""


class UnknownLabelError(ArtifactError, KeyError):
    """A parsing label outside the documented label table."""


class NothingToRepairError(ArtifactError, ValueError):
    """Scale generation was invoked with no artifact reports."""


class MissingFileError(ArtifactError, FileNotFoundError):
    """A corpus instance file named by the layout is absent."""


class CorpusFormatError(ArtifactError, ValueError):
    """A corpus file exists but violates the documented schema."""


class ConfigError(ArtifactError, ValueError):
    """Bad pipeline configuration: unknown key or out-of-range value."""


class BackendError(ArtifactError, RuntimeError):
    """The inpainting backend returned a semantic error payload."""


class TransportError(ArtifactError, RuntimeError):
    """The inpainting backend could not be reached after all retries."""
