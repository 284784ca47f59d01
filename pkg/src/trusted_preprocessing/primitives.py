"""Cryptographic primitives shared by every component.

All roles use the same deterministic Schnorr-family signature scheme
(Ed25519 from ``cryptography``); hashing is SHA-256.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)
from pydantic import BaseModel, Field, field_validator

from trusted_preprocessing.errors import KeyGenerationError, KeyRoleError

logger = logging.getLogger(__name__)

DIGEST_SIZE = 32
SEED_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


class KeyRole(str, Enum):
    """Roles a key pair can be generated for."""
    SENSOR = "sensor"
    EVIDENCE = "evidence"
    DEVICE_IDENTITY = "device_identity"
    PKI_ROOT = "pki_root"


def hash_message(message: bytes) -> bytes:
    """SHA-256 digest of ``message`` (32 bytes)."""
    return hashlib.sha256(message).digest()


@dataclass(frozen=True)
class KeyPair:
    """A role-tagged signing key pair."""

    role: KeyRole
    public_key: bytes
    private_key: bytes

    def __repr__(self) -> str:
        return f"KeyPair(role={self.role.value}, public_key={self.public_key.hex()[:16]}...)"

    def require_role(self, role: KeyRole) -> "KeyPair":
        """Return self, or raise ``KeyRoleError`` when used outside its role."""
        if self.role != role:
            raise KeyRoleError(f"expected a {role.value} key, got a {self.role.value} key")
        return self

    def sign(self, message: bytes) -> bytes:
        return sign(self.private_key, message)

    def verify(self, message: bytes, signature: bytes) -> bool:
        return verify(self.public_key, message, signature)


def generate_keypair(role: KeyRole, seed: Optional[bytes] = None) -> KeyPair:
    """Generate a key pair for ``role``.

    With a seed the pair is deterministic (fixtures); the seed is domain
    separated by role so the same seed never yields interchangeable keys
    across roles. Without a seed OS entropy is used.

    Raises:
        KeyGenerationError: if a seed is given and is not exactly 32 bytes
    """
    role = KeyRole(role)
    if seed is None:
        seed = os.urandom(SEED_SIZE)
    elif len(seed) != SEED_SIZE:
        raise KeyGenerationError(f"seed must be {SEED_SIZE} bytes, got {len(seed)}")

    private_bytes = hash_message(b"keygen/" + role.value.encode() + b"/" + seed)
    private_key = Ed25519PrivateKey.from_private_bytes(private_bytes)
    public_bytes = private_key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    raw_private = private_key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
    return KeyPair(role=role, public_key=public_bytes, private_key=raw_private)


def keypair_from_private(role: KeyRole, private_key: bytes) -> KeyPair:
    """Rebuild a key pair from its raw private key."""
    try:
        key = Ed25519PrivateKey.from_private_bytes(private_key)
    except ValueError as e:
        raise KeyGenerationError(f"invalid private key: {e}") from e
    public_bytes = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(role=KeyRole(role), public_key=public_bytes, private_key=bytes(private_key))


def sign(private_key: bytes, message: bytes) -> bytes:
    """Sign ``message`` with a raw 32-byte private key (64-byte signature)."""
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Verify a signature. Malformed keys or signatures verify as False."""
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(
            bytes(signature), bytes(message)
        )
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# =====================================================
# KEY FILES
# =====================================================

class KeyFile(BaseModel):
    """On-disk key file: ``{role, public_key_hex, private_key_hex}``."""

    role: KeyRole = Field(..., description="Role the key pair was generated for")
    public_key_hex: str = Field(..., description="Raw public key, lowercase hex")
    private_key_hex: str = Field(..., description="Raw private key, lowercase hex")

    @field_validator("public_key_hex", "private_key_hex")
    @classmethod
    def _lowercase_hex(cls, value: str) -> str:
        if value != value.lower() or len(value) != 64:
            raise ValueError("keys must be 32 bytes of lowercase hex")
        bytes.fromhex(value)
        return value

    @classmethod
    def from_keypair(cls, keypair: KeyPair) -> "KeyFile":
        return cls(
            role=keypair.role,
            public_key_hex=keypair.public_key.hex(),
            private_key_hex=keypair.private_key.hex(),
        )

    def to_keypair(self) -> KeyPair:
        return KeyPair(
            role=self.role,
            public_key=bytes.fromhex(self.public_key_hex),
            private_key=bytes.fromhex(self.private_key_hex),
        )


def dump_json(data: dict) -> str:
    """Canonical JSON text used for every artifact written to disk."""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def save_keypair(path: Path, keypair: KeyPair) -> Path:
    """Write a key file and return its path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(KeyFile.from_keypair(keypair).model_dump(mode="json")))
    logger.debug(f"Saved {keypair.role.value} key to {path}")
    return path


def load_keypair(path: Path, role: Optional[KeyRole] = None) -> KeyPair:
    """Read a key file, optionally enforcing its role."""
    keypair = KeyFile.model_validate_json(Path(path).read_text()).to_keypair()
    if role is not None:
        keypair.require_role(role)
    return keypair
