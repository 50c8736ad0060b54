"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class DescriptorError(ValueError):
    """Invalid descriptor, schema, or state name."""


class DataFormatError(ValueError):
    """Malformed data file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field path."""


class ModelFormatError(ValueError):
    """Unreadable or corrupted model file."""


class DivergenceError(RuntimeError):
    """Training objective became non-finite or blew up."""

    def __init__(self, epoch, value):
        super().__init__(f"training diverged at epoch {epoch} (objective={value!r})")
        self.epoch = epoch
        self.value = value
