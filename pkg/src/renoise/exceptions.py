"""Exception types shared across the package."""


class RenoiseError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(RenoiseError):
    """Two arrays that must agree in shape do not. Names both shapes."""

    def __init__(self, what, expected, got):
        super().__init__(f"{what}: expected shape {tuple(expected)}, got {tuple(got)}")
        self.expected = tuple(expected)
        self.got = tuple(got)


class RoleError(RenoiseError):
    """An image buffer was used in a role it does not carry."""


class SpecError(RenoiseError):
    """A declarative spec (noise, network, training, trial) fails validation."""


class ImageFormatError(RenoiseError):
    """Image file problems. ``kind`` is a stable machine-readable tag."""

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class DivergenceError(RenoiseError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, epoch, message):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class BackwardStateError(RenoiseError):
    """backward() called without a preceding train-mode forward pass."""
