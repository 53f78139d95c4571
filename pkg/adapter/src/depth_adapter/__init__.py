"""Reference adapter for the depthprobe wire protocol."""

__version__ = "0.1.0"

from .serve import AdapterConfig, serve  # noqa: F401
