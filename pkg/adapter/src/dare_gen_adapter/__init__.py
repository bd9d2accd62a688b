"""Reference dare-gen/1 generator server backed by a causal transformer LM."""

from .backend import AdapterSession, BackendError, Settings
from .server import PROTOCOL_VERSION, main, serve

__version__ = "0.1.0"

__all__ = ["AdapterSession", "BackendError", "PROTOCOL_VERSION", "Settings", "main", "serve"]
