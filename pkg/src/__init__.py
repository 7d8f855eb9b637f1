"""Software-defined QKD network emulator."""

__version__ = "1.0.0"
