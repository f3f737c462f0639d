"""HTTP service: the live frame stream plus JSON endpoints over the core library."""

from .app import create_app
from .server import ServerHandle, serve_stream

__all__ = ["create_app", "ServerHandle", "serve_stream"]
