"""Regulated data access: trusted executables, an online regulator, unlinkable
virtual identities and three scripted case-study pipelines."""

from .crypto import Envelope, TypeId, open_envelope, seal
from .identity import IdentityAuthority, Individual, Issuer, derive_vid
from .regulator import Regulator
from .store import EncryptedStore
from .te import TEManifest, load_te, run_te

__all__ = [
    "EncryptedStore",
    "Envelope",
    "IdentityAuthority",
    "Individual",
    "Issuer",
    "Regulator",
    "TEManifest",
    "TypeId",
    "derive_vid",
    "load_te",
    "open_envelope",
    "run_te",
    "seal",
]

__version__ = "0.1.0"
