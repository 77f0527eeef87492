"""Keypairs, decentralized identifiers, and signatures.

Identifiers embed the public key, so resolving one is a pure computation:
no registry lookup, no network. The ledger address of a key is a truncated
hash of the public key, which keeps on-chain records small and avoids
putting raw keys in transaction payloads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .canonical import sha256_bytes

DID_METHOD = "vax"

_DID_RE = re.compile(r"^did:([a-z0-9]+):([0-9a-f]+)$")
_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")

_P = 2**255 - 19
_D = (-121665 * pow(121666, -1, _P)) % _P

SEED_LEN = 32
PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64
ADDRESS_BYTES = 20


class IdentityError(Exception):
    pass


class BadSeed(IdentityError):
    """Seed material has the wrong length or type."""


class MalformedKey(IdentityError):
    """Key bytes do not describe a valid point."""


class UnknownMethod(IdentityError):
    """Identifier uses a method this resolver does not speak."""


class MalformedDid(IdentityError):
    """Identifier does not parse at all."""


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 keypair; ``private_key`` is the 32-byte seed."""

    private_key: bytes
    public_key: bytes

    @property
    def did(self) -> str:
        return did_from_key(self.public_key)

    @property
    def address(self) -> str:
        return address_of(self.public_key)


@dataclass(frozen=True)
class DidDocument:
    id: str
    verification_key: bytes
    address: str
    # key-embedded identifiers carry no creation history
    created_at: int = 0


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Derive a keypair from a 32-byte seed, or a fresh random one."""
    if seed is None:
        private = ed25519.Ed25519PrivateKey.generate()
        seed = private.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )
    else:
        if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_LEN:
            raise BadSeed(f"seed must be {SEED_LEN} bytes")
        seed = bytes(seed)
        private = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(private_key=seed, public_key=public)


def _check_public_key(public_key: bytes) -> bytes:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    return bytes(public_key)


def address_of(public_key: bytes) -> str:
    """Ledger address: first 20 bytes of SHA-256 over the raw public key."""
    public_key = _check_public_key(public_key)
    return "0x" + sha256_bytes(public_key)[:ADDRESS_BYTES].hex()


def is_address(text: object) -> bool:
    return isinstance(text, str) and bool(_ADDRESS_RE.match(text))


def did_from_key(public_key: bytes) -> str:
    public_key = _check_public_key(public_key)
    return f"did:{DID_METHOD}:{public_key.hex()}"


def _is_curve_point(public_key: bytes) -> bool:
    # decode the y coordinate and test that x^2 has a square root
    y = int.from_bytes(public_key, "little") & ((1 << 255) - 1)
    if y >= _P:
        return False
    numerator = (y * y - 1) % _P
    denominator = (_D * y * y + 1) % _P
    x_squared = numerator * pow(denominator, -1, _P) % _P
    return pow(x_squared, (_P - 1) // 2, _P) in (0, 1)


def resolve(did: str) -> DidDocument:
    """Expand an identifier into its document. Pure; never touches I/O."""
    if not isinstance(did, str):
        raise MalformedDid("identifier must be a string")
    match = _DID_RE.match(did)
    if not match:
        raise MalformedDid(f"not a valid identifier: {did!r}")
    method, ident = match.groups()
    if method != DID_METHOD:
        raise UnknownMethod(f"cannot resolve method {method!r}")
    if len(ident) != PUBLIC_KEY_LEN * 2:
        raise MalformedDid("identifier must embed a 32-byte public key")
    key = bytes.fromhex(ident)
    # reject encodings of invalid curve points up front; the library only
    # checks on use
    if not _is_curve_point(key):
        raise MalformedKey("embedded key does not encode a curve point")
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(key)
    except Exception as exc:
        raise MalformedKey(f"embedded key is not a valid point: {exc}") from exc
    return DidDocument(id=did, verification_key=key, address=address_of(key))


def sign(private_key: bytes, message: bytes) -> bytes:
    """Detached Ed25519 signature; deterministic for a given key and message."""
    if not isinstance(private_key, (bytes, bytearray)) or len(private_key) != SEED_LEN:
        raise BadSeed(f"private key must be a {SEED_LEN}-byte seed")
    signer = ed25519.Ed25519PrivateKey.from_private_bytes(bytes(private_key))
    return signer.sign(bytes(message))


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid; malformed inputs verify as False."""
    try:
        key = ed25519.Ed25519PublicKey.from_public_bytes(_check_public_key(public_key))
    except Exception:
        return False
    if not isinstance(signature, (bytes, bytearray)) or len(signature) != SIGNATURE_LEN:
        return False
    try:
        key.verify(bytes(signature), bytes(message))
        return True
    except InvalidSignature:
        return False
