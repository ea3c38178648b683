"""Sovereign organization identifiers and the trust registry.

Organizations are identified by deterministic ``did:mdm`` identifiers
derived from their initial public key, resolvable to documents listing
their verification keys.  A governance-operated trust registry anchors
which issuers are trusted for which credential schemas during which
tick windows.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from . import crypto
from .crypto import KeyPair, Signature
from .errors import Error

DID_PATTERN = re.compile(r"^did:mdm:[0-9a-f]{32}$")


class IdentityError(Error):
    pass


class MalformedDid(IdentityError):
    pass


class NotFound(IdentityError):
    pass


class DidCollision(IdentityError):
    pass


class NotOperator(IdentityError):
    pass


class OverlappingEntry(IdentityError):
    pass


def did_for_public_key(public: bytes) -> str:
    """Derive the organization identifier: first 16 bytes (as hex) of
    sha256 over the raw public key."""
    return "did:mdm:" + crypto.sha256_hex(public)[:32]


def key_reference(did: str) -> str:
    """Verification-method identifier for an organization's initial key."""
    return did + "#key-1"


@dataclass(frozen=True)
class VerificationMethod:
    method_id: str
    public_key_hex: str

    def to_obj(self) -> dict:
        return {"methodId": self.method_id, "publicKeyHex": self.public_key_hex}

    @classmethod
    def from_obj(cls, obj: dict) -> "VerificationMethod":
        return cls(method_id=obj["methodId"], public_key_hex=obj["publicKeyHex"])


@dataclass(frozen=True)
class DidDocument:
    id: str
    verification_methods: tuple[VerificationMethod, ...]
    created: int

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "verificationMethods": [m.to_obj() for m in self.verification_methods],
            "created": self.created,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "DidDocument":
        return cls(
            id=obj["id"],
            verification_methods=tuple(
                VerificationMethod.from_obj(m) for m in obj["verificationMethods"]
            ),
            created=obj["created"],
        )

    def digest(self) -> str:
        return crypto.digest_of(self.to_obj())

    def public_key_for(self, method_id: str) -> bytes | None:
        for method in self.verification_methods:
            if method.method_id == method_id:
                return bytes.fromhex(method.public_key_hex)
        return None


class Resolver:
    """Local verifiable-data-registry stand-in: did -> document."""

    def __init__(self) -> None:
        self._store: dict[str, DidDocument] = {}

    def register(self, doc: DidDocument) -> None:
        if doc.id in self._store:
            raise DidCollision(f"{doc.id} already registered")
        self._store[doc.id] = doc

    def resolve(self, did: str) -> DidDocument:
        if not DID_PATTERN.match(did):
            raise MalformedDid(f"not a did:mdm identifier: {did!r}")
        doc = self._store.get(did)
        if doc is None:
            raise NotFound(f"no document registered for {did}")
        return doc

    def try_resolve(self, did: str) -> DidDocument | None:
        try:
            return self.resolve(did)
        except IdentityError:
            return None

    def dids(self) -> list[str]:
        return sorted(self._store)


def create_organization(
    seed: bytes, tick: int, resolver: Resolver
) -> tuple[str, DidDocument, KeyPair]:
    """Create and register a sovereign organization identity.

    The Did is derived deterministically from the public key, so a reused
    seed collides and is rejected.
    """
    key = KeyPair.from_seed(seed)
    did = did_for_public_key(key.public)
    doc = DidDocument(
        id=did,
        verification_methods=(
            VerificationMethod(method_id=key_reference(did), public_key_hex=key.public.hex()),
        ),
        created=tick,
    )
    resolver.register(doc)
    return did, doc, key


# --------------------------------------------------------------------------
# Trust registry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrustEntry:
    issuer: str
    schema_id: str
    valid_from: int
    valid_until: int | None = None

    def to_obj(self) -> dict:
        return {
            "issuer": self.issuer,
            "schemaId": self.schema_id,
            "validFrom": self.valid_from,
            "validUntil": self.valid_until,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TrustEntry":
        return cls(
            issuer=obj["issuer"],
            schema_id=obj["schemaId"],
            valid_from=obj["validFrom"],
            valid_until=obj["validUntil"],
        )


@dataclass(frozen=True)
class TrustRegistry:
    entries: tuple[TrustEntry, ...]
    operator: str
    signature: Signature

    def payload_obj(self) -> dict:
        return {
            "entries": [e.to_obj() for e in self.entries],
            "registryOperator": self.operator,
        }

    def to_obj(self) -> dict:
        obj = self.payload_obj()
        obj["signature"] = self.signature.to_obj()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "TrustRegistry":
        return cls(
            entries=tuple(TrustEntry.from_obj(e) for e in obj["entries"]),
            operator=obj["registryOperator"],
            signature=Signature.from_obj(obj["signature"]),
        )

    def digest(self) -> str:
        return crypto.digest_of(self.to_obj())


def _sign_registry(entries: tuple[TrustEntry, ...], operator: str, key: KeyPair) -> TrustRegistry:
    unsigned = TrustRegistry(entries=entries, operator=operator, signature=Signature(b"\x00" * 64, ""))
    message = crypto.canonicalize(unsigned.payload_obj())
    return replace(unsigned, signature=crypto.sign(key, message, signer=key_reference(operator)))


def new_registry(operator: str, operator_key: KeyPair) -> TrustRegistry:
    if did_for_public_key(operator_key.public) != operator:
        raise NotOperator("operator key does not belong to the stated operator")
    return _sign_registry((), operator, operator_key)


def _windows_overlap(a: TrustEntry, b: TrustEntry) -> bool:
    a_until = a.valid_until if a.valid_until is not None else float("inf")
    b_until = b.valid_until if b.valid_until is not None else float("inf")
    return a.valid_from <= b_until and b.valid_from <= a_until


def amend_registry(registry: TrustRegistry, entry: TrustEntry, operator_key: KeyPair) -> TrustRegistry:
    """Return a new registry value with the entry appended and re-signed.

    The original registry is untouched; only the operator's key can amend.
    """
    if did_for_public_key(operator_key.public) != registry.operator:
        raise NotOperator("amendment attempted with a non-operator key")
    for existing in registry.entries:
        if (
            existing.issuer == entry.issuer
            and existing.schema_id == entry.schema_id
            and _windows_overlap(existing, entry)
        ):
            raise OverlappingEntry(
                f"({entry.issuer}, {entry.schema_id}) already covered in an overlapping window"
            )
    return _sign_registry(registry.entries + (entry,), registry.operator, operator_key)


def verify_registry(registry: TrustRegistry, resolver: Resolver) -> bool:
    doc = resolver.try_resolve(registry.operator)
    if doc is None:
        return False
    public = doc.public_key_for(registry.signature.signer)
    if public is None:
        return False
    message = crypto.canonicalize(registry.payload_obj())
    return crypto.verify(public, message, registry.signature)


def is_trusted_issuer(registry: TrustRegistry, issuer: str, schema_id: str, tick: int) -> bool:
    """True iff an entry matches issuer and schema with
    validFrom <= tick <= validUntil (open-ended when validUntil is absent).
    The registry signature is assumed to be verified by the caller."""
    for entry in registry.entries:
        if entry.issuer != issuer or entry.schema_id != schema_id:
            continue
        if entry.valid_from <= tick and (entry.valid_until is None or tick <= entry.valid_until):
            return True
    return False
