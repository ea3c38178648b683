"""Canonical serialization, SHA-256 hashing, and Ed25519 signatures.

Every integrity guarantee in the package bottoms out here: structured
values are serialized to a single canonical byte form, digests and
signatures are computed over those bytes, and verification re-derives
the same bytes on the other side.

Canonical form, bit-exact:
  maps as ``{"k":v,...}`` with keys sorted by Unicode code point,
  sequences as ``[v,...]``, strings with minimal escaping (``\\"``,
  ``\\\\``, ``\\n``, ``\\r``, ``\\t``, ``\\u00XX`` for other control
  characters), integers in base 10, ``true``/``false``/``null``,
  no whitespace between tokens.  Floats are rejected outright: signed
  content is integer-only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import Error


class CryptoError(Error):
    """Base error for canonicalization and signature primitives."""


class FloatNotAllowed(CryptoError):
    """A non-integer number appeared in content to be canonicalized."""


class DuplicateKey(CryptoError):
    """A parsed map repeats a key."""


class UnsupportedType(CryptoError):
    """A value outside the canonical-form data model was supplied."""


class MalformedKey(CryptoError):
    """A public or secret key has the wrong length."""


class MalformedSignature(CryptoError):
    """A signature blob has the wrong length."""


# --------------------------------------------------------------------------
# Canonical serialization
# --------------------------------------------------------------------------

_STRING_ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _write_string(s: str, out: list[str]) -> None:
    out.append('"')
    for ch in s:
        esc = _STRING_ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')


def _write(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        raise FloatNotAllowed(f"float {value!r} not allowed in canonical content")
    elif isinstance(value, str):
        _write_string(value, out)
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise UnsupportedType(f"map key {key!r} is not a string")
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                out.append(",")
            _write_string(key, out)
            out.append(":")
            _write(value[key], out)
        out.append("}")
    else:
        raise UnsupportedType(f"cannot canonicalize {type(value).__name__}")


def canonicalize(value) -> bytes:
    """Serialize a tree of maps/sequences/strings/ints/bools/None to canonical bytes.

    Deterministic: structurally equal values always yield identical bytes.
    Idempotent: canonicalizing a parsed canonical form reproduces it.
    """
    out: list[str] = []
    _write(value, out)
    return "".join(out).encode("utf-8")


def _reject_float(literal: str):
    raise FloatNotAllowed(f"float literal {literal!r} not allowed")


def _reject_constant(literal: str):
    raise FloatNotAllowed(f"non-finite literal {literal!r} not allowed")


def _pairs_hook(pairs):
    obj = {}
    for key, val in pairs:
        if key in obj:
            raise DuplicateKey(f"duplicate map key {key!r}")
        obj[key] = val
    return obj


def loads(data: bytes | str):
    """Parse canonical-form content back into a value tree.

    Accepts insignificant whitespace (a superset of the canonical form)
    but rejects floats and duplicate map keys, so ``canonicalize(loads(b))``
    is the canonical form of whatever ``b`` encodes.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(
            data,
            object_pairs_hook=_pairs_hook,
            parse_float=_reject_float,
            parse_constant=_reject_constant,
        )
    except (FloatNotAllowed, DuplicateKey):
        raise
    except ValueError as exc:
        raise CryptoError(f"malformed canonical content: {exc}") from exc


def is_canonical(data: bytes) -> bool:
    """True iff ``data`` is already in canonical form."""
    try:
        return canonicalize(loads(data)) == data
    except CryptoError:
        return False


# --------------------------------------------------------------------------
# Hashing
# --------------------------------------------------------------------------

def sha256_hex(data: bytes) -> str:
    """SHA-256 digest of raw bytes as 64 lowercase hex characters."""
    return hashlib.sha256(data).hexdigest()


def digest_of(value) -> str:
    """SHA-256 of the canonical form of a structured value."""
    return sha256_hex(canonicalize(value))


# --------------------------------------------------------------------------
# Ed25519 signatures (detached)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair; the public key is derived from the 32-byte seed."""

    secret: bytes
    public: bytes

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        if len(seed) != 32:
            raise MalformedKey(f"seed must be 32 bytes, got {len(seed)}")
        private = Ed25519PrivateKey.from_private_bytes(seed)
        public = private.public_key().public_bytes_raw()
        return cls(secret=seed, public=public)


@dataclass(frozen=True)
class Signature:
    """Detached Ed25519 signature plus the verification-method id that made it."""

    sig: bytes
    signer: str

    def to_obj(self) -> dict:
        return {"sig": self.sig.hex(), "signer": self.signer}

    @classmethod
    def from_obj(cls, obj: dict) -> "Signature":
        return cls(sig=bytes.fromhex(obj["sig"]), signer=obj["signer"])


def sign(key: KeyPair, message: bytes, signer: str = "") -> Signature:
    """Sign canonical bytes; Ed25519 is deterministic, so same key + message
    always yields the same 64 signature bytes."""
    private = Ed25519PrivateKey.from_private_bytes(key.secret)
    return Signature(sig=private.sign(message), signer=signer)


def verify(public: bytes, message: bytes, signature: Signature | bytes) -> bool:
    """True iff ``signature`` is a valid Ed25519 signature of ``message``.

    Wrong-length keys or signatures raise (malformed input is distinct
    from a clean ``False``).
    """
    sig = signature.sig if isinstance(signature, Signature) else signature
    if len(public) != 32:
        raise MalformedKey(f"public key must be 32 bytes, got {len(public)}")
    if len(sig) != 64:
        raise MalformedSignature(f"signature must be 64 bytes, got {len(sig)}")
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
        return True
    except InvalidSignature:
        return False
