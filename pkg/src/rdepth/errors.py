"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes or ranks."""


class ContractError(ValueError):
    """A call violated an operation's precondition."""


class ConfigError(ValueError):
    """Invalid model or run configuration."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf where finite values are required."""


class ParseError(ValueError):
    """Malformed file content; carries the file and byte offset."""

    def __init__(self, message, path=None, offset=None):
        detail = message
        if path is not None:
            detail += f" (file: {path}"
            if offset is not None:
                detail += f", byte offset: {offset}"
            detail += ")"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class CheckpointError(ValueError):
    """Checkpoint magic/version mismatch or incompatible contents."""
