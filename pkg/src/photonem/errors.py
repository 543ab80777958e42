"""Exception types raised by photonem."""


class PhotonEMError(Exception):
    """Base class for all photonem errors."""


class DomainError(PhotonEMError, ValueError):
    """A parameter lies outside the domain of an operation."""


class ValidationError(PhotonEMError, ValueError):
    """An input value or file violates its documented constraints."""


class InfeasibleError(PhotonEMError, ValueError):
    """Observed counts fall in a bin the model assigns zero probability."""

    def __init__(self, message, bin_index=None):
        super().__init__(message)
        self.bin_index = bin_index


class NumericalError(PhotonEMError, RuntimeError):
    """An internal numerical consistency check failed."""
