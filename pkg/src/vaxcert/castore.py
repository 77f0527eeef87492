"""Content-addressed blob store with an encrypt-before-store boundary.

Blobs are addressed by the SHA-256 of their canonical envelope bytes, so
the address doubles as an integrity check on retrieval. The store refuses
anything that is not a sealed envelope: plaintext never touches disk.

Sealing uses an ephemeral-static Diffie-Hellman construction on the
recipient's identity key. Ed25519 points convert birationally to the
Montgomery curve (u = (1+y)/(1-y)), which lets one keypair serve both
signing and decryption without a second registration step.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from random import Random

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .canonical import b64url_decode, b64url_encode, canonical_json_bytes, sha256_bytes

SCHEME_ECIES_V1 = "ecies-v1"
_ALLOWED_SCHEMES = frozenset({SCHEME_ECIES_V1})
_HKDF_INFO = b"vax-ecies-v1"
_CID_RE = re.compile(r"^sha256-[0-9a-f]{64}$")

_ED_P = 2**255 - 19
_ED_D = (-121665 * pow(121666, -1, _ED_P)) % _ED_P


class StoreError(Exception):
    pass


class UnencryptedPayload(StoreError):
    """Attempt to store something that is not a sealed envelope."""


class NotFound(StoreError):
    pass


class IntegrityError(StoreError):
    """Stored bytes no longer hash to their address."""


class DecryptionFailed(StoreError):
    pass


@dataclass(frozen=True)
class Cid:
    """Content address: hash algorithm plus digest."""

    algorithm: str
    digest: bytes

    @property
    def text(self) -> str:
        return f"{self.algorithm}-{self.digest.hex()}"

    @classmethod
    def parse(cls, text: str) -> "Cid":
        if not isinstance(text, str) or not _CID_RE.match(text):
            raise StoreError(f"not a content address: {text!r}")
        algorithm, hexdigest = text.split("-", 1)
        return cls(algorithm=algorithm, digest=bytes.fromhex(hexdigest))

    @classmethod
    def of(cls, data: bytes) -> "Cid":
        return cls(algorithm="sha256", digest=sha256_bytes(data))

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Envelope:
    """Sealed blob: everything needed to decrypt except the recipient key."""

    scheme: str
    ephemeral_public_key: bytes
    nonce: bytes
    ciphertext: bytes
    recipient_hint: str = ""

    def to_doc(self) -> dict:
        return {
            "scheme": self.scheme,
            "ephemeral_public_key": b64url_encode(self.ephemeral_public_key),
            "nonce": b64url_encode(self.nonce),
            "ciphertext": b64url_encode(self.ciphertext),
            "recipient_hint": self.recipient_hint,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Envelope":
        try:
            return cls(
                scheme=doc["scheme"],
                ephemeral_public_key=b64url_decode(doc["ephemeral_public_key"]),
                nonce=b64url_decode(doc["nonce"]),
                ciphertext=b64url_decode(doc["ciphertext"]),
                recipient_hint=doc.get("recipient_hint", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"malformed envelope: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_doc())

    @property
    def cid(self) -> Cid:
        return Cid.of(self.canonical_bytes())


def _rand_bytes(rng: Random | None, n: int) -> bytes:
    return rng.randbytes(n) if rng is not None else os.urandom(n)


def ed25519_public_to_x25519(public_key: bytes) -> bytes:
    """Map an Ed25519 public point to its Montgomery u-coordinate."""
    if len(public_key) != 32:
        raise DecryptionFailed("public key must be 32 bytes")
    y = int.from_bytes(public_key, "little") & ((1 << 255) - 1)
    if y >= _ED_P:
        raise DecryptionFailed("public key encodes no curve point")
    # recover x^2 to confirm the point is on the curve
    num = (y * y - 1) % _ED_P
    den = (_ED_D * y * y + 1) % _ED_P
    x2 = (num * pow(den, -1, _ED_P)) % _ED_P
    if pow(x2, (_ED_P - 1) // 2, _ED_P) not in (0, 1):
        raise DecryptionFailed("public key encodes no curve point")
    if (1 - y) % _ED_P == 0:
        raise DecryptionFailed("public key has no Montgomery image")
    u = (1 + y) * pow(1 - y, -1, _ED_P) % _ED_P
    return u.to_bytes(32, "little")


def ed25519_seed_to_x25519(seed: bytes) -> bytes:
    """Derive the matching Montgomery private scalar from a signing seed."""
    if len(seed) != 32:
        raise DecryptionFailed("seed must be 32 bytes")
    h = bytearray(hashlib.sha512(seed).digest()[:32])
    h[0] &= 248
    h[31] &= 127
    h[31] |= 64
    return bytes(h)


def _session_key(shared: bytes, ephemeral_public: bytes, recipient_public: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(),
        length=32,
        salt=ephemeral_public + recipient_public,
        info=_HKDF_INFO,
    ).derive(shared)


def encrypt_for(
    recipient_public_key: bytes,
    plaintext: bytes,
    recipient_hint: str = "",
    rng: Random | None = None,
) -> Envelope:
    """Seal ``plaintext`` so only the holder of the matching seed can open it."""
    recipient_x = ed25519_public_to_x25519(recipient_public_key)
    ephemeral = X25519PrivateKey.from_private_bytes(_rand_bytes(rng, 32))
    ephemeral_public = ephemeral.public_key().public_bytes_raw()
    shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(recipient_x))
    key = _session_key(shared, ephemeral_public, recipient_x)
    nonce = _rand_bytes(rng, 12)
    ciphertext = ChaCha20Poly1305(key).encrypt(nonce, bytes(plaintext), recipient_hint.encode("utf-8"))
    return Envelope(
        scheme=SCHEME_ECIES_V1,
        ephemeral_public_key=ephemeral_public,
        nonce=nonce,
        ciphertext=ciphertext,
        recipient_hint=recipient_hint,
    )


def decrypt(recipient_seed: bytes, envelope: Envelope) -> bytes:
    """Open an envelope with the recipient's signing seed."""
    if envelope.scheme not in _ALLOWED_SCHEMES:
        raise DecryptionFailed(f"unknown scheme {envelope.scheme!r}")
    try:
        scalar = ed25519_seed_to_x25519(recipient_seed)
        private = X25519PrivateKey.from_private_bytes(scalar)
        recipient_x = private.public_key().public_bytes_raw()
        shared = private.exchange(X25519PublicKey.from_public_bytes(envelope.ephemeral_public_key))
        key = _session_key(shared, envelope.ephemeral_public_key, recipient_x)
        return ChaCha20Poly1305(key).decrypt(
            envelope.nonce, envelope.ciphertext, envelope.recipient_hint.encode("utf-8")
        )
    except DecryptionFailed:
        raise
    except Exception as exc:
        raise DecryptionFailed(f"cannot open envelope: {exc}") from exc


class ContentStore:
    """Flat directory of envelopes keyed by content address."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, cid: Cid) -> Path:
        return self.root / cid.text

    def put(self, envelope: Envelope) -> Cid:
        """Store a sealed envelope; idempotent for identical content."""
        if not isinstance(envelope, Envelope) or envelope.scheme not in _ALLOWED_SCHEMES:
            raise UnencryptedPayload("store accepts only sealed envelopes")
        data = envelope.canonical_bytes()
        cid = Cid.of(data)
        path = self._path(cid)
        with self._lock:
            if not path.exists():
                tmp = path.with_name(path.name + f".tmp{os.getpid()}")
                tmp.write_bytes(data)
                os.replace(tmp, path)
        return cid

    def exists(self, cid: Cid | str) -> bool:
        if isinstance(cid, str):
            cid = Cid.parse(cid)
        return self._path(cid).exists()

    def get(self, cid: Cid | str) -> Envelope:
        """Fetch by address, re-verifying the hash before parsing."""
        if isinstance(cid, str):
            cid = Cid.parse(cid)
        path = self._path(cid)
        if not path.exists():
            raise NotFound(f"no blob at {cid.text}")
        data = path.read_bytes()
        if sha256_bytes(data) != cid.digest:
            raise IntegrityError(f"blob at {cid.text} fails its hash check")
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IntegrityError(f"blob at {cid.text} is not an envelope: {exc}") from exc
        return Envelope.from_doc(doc)
