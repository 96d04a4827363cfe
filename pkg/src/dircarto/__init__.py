"""Sparse emitter localization and tracking with steerable ULA sensors."""

from dircarto.errors import ConfigError, GeometryError, PreconditionError

__version__ = "0.1.0"

__all__ = ["ConfigError", "GeometryError", "PreconditionError", "__version__"]
