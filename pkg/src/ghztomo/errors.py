class TomographyError(ValueError):
    """Base class for errors raised by ghztomo."""


class DegenerateProjectionError(TomographyError):
    pass


class PhysicalityError(TomographyError):
    """A matrix that must be a physical state is not positive semidefinite."""


class DataError(TomographyError):
    """Malformed or incomplete measurement data / artifact files."""
