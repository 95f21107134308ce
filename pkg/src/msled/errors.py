"""Exception types raised by the msled package."""


class MsledError(Exception):
    """Base class for all package errors."""


class ParameterError(MsledError, ValueError):
    """An argument or configuration value is out of its documented range."""


class DecodeError(MsledError):
    """An image file could not be decoded."""


class DegenerateInputError(MsledError):
    """Too little data to compute a meaningful result (e.g. < 2 vectors)."""


class MetricDomainError(MsledError):
    """Matrix input outside the SPD domain of the Riemannian metric."""


class DescriptorMismatchError(MsledError):
    """Descriptors built with incompatible scale lists were combined."""


class DatasetError(MsledError):
    """A dataset directory could not be scanned into a usable manifest."""


class IndexBuildError(MsledError):
    """Index construction aborted because an image failed to process."""


class IndexFileError(MsledError):
    """Base class for descriptor index persistence failures."""


class IndexFormatError(IndexFileError):
    """The file is not a descriptor index (bad magic or malformed layout)."""


class IndexVersionError(IndexFileError):
    """The file is a descriptor index of an unsupported version."""


class IndexTruncatedError(IndexFileError):
    """The file ends before the structure it declares is complete."""


class IndexChecksumError(IndexFileError):
    """The file content does not match its trailing checksum."""
