"""Conditioned-inpainting HTTP service (stub and diffusion engines)."""

from .config import BackendConfig
from .service import make_server, serve

__all__ = ["BackendConfig", "make_server", "serve"]
