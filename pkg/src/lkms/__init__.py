"""Local Key Management System."""

from .store import KeyStore
from .service import LocalKMS, assemble_key, key_id_for

__all__ = ["KeyStore", "LocalKMS", "assemble_key", "key_id_for"]
