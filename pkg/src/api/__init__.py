"""API package for the networked emulator."""

from .routes import router
from .dependencies import get_network, get_network_lock

__all__ = ["router", "get_network", "get_network_lock"]
