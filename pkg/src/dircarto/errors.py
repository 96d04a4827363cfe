class ConfigError(ValueError):
    """Invalid scenario or run configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class GeometryError(ValueError):
    """A sensor sits (numerically) on top of a grid point."""


class PreconditionError(ValueError):
    """An operation was called outside its contract."""
