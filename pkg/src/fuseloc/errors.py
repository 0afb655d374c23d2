"""Exception hierarchy shared across the localization pipeline."""


class LocalizationError(Exception):
    """Base class for every pipeline failure."""


class EmptyCloudError(LocalizationError, ValueError):
    pass


class ImageTooSmallError(LocalizationError, ValueError):
    pass


class UnreliableEstimateError(LocalizationError):
    """Too few finite pixels for a trustworthy noise estimate; treat LiDAR as degraded."""


class SparseImageError(LocalizationError, ValueError):
    pass


class YawUnobservableError(LocalizationError):
    """Zero-spectrum descriptors carry no heading information."""


class MalformedMacError(LocalizationError, ValueError):
    pass


class ScanSizeMismatchError(LocalizationError, ValueError):
    pass


class LocalizationUnavailableError(LocalizationError):
    """Both sensors failed their confidence gates."""


class RegistrationFailedError(LocalizationError):
    pass


class OutOfBoundsError(LocalizationError, ValueError):
    pass


class FormatError(LocalizationError, ValueError):
    """Raised when a serialized artifact has the wrong magic, version or size."""
