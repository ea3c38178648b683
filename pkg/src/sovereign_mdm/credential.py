"""Master data records as verifiable credentials.

Covers the full credential lifecycle: schema conformance, issuance
(optionally with salted-digest selective disclosure), holder
presentations, bitstring status lists for revocation, and the six-check
verification pipeline that consults nothing beyond resolver, trust
registry, and status lists.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from . import crypto, identity
from .crypto import KeyPair, Signature
from .errors import Error
from .identity import Resolver, TrustRegistry

STATUS_LIST_BITS = 1024

VALID = "Valid"
INVALID = "Invalid"
REVOKED = "Revoked"

CHECK_NAMES = (
    "signature",
    "issuerTrusted",
    "notRevoked",
    "notExpired",
    "schemaConformant",
    "disclosuresConsistent",
)

ATTRIBUTE_KINDS = ("string", "integer", "boolean")


class CredentialError(Error):
    pass


class SchemaViolation(CredentialError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(f"{v.attribute}: {v.reason}" for v in violations))


class StatusSlotTaken(CredentialError):
    pass


class SupersedeMismatch(CredentialError):
    pass


class NotIssuer(CredentialError):
    pass


class NotHolder(CredentialError):
    pass


class UnknownAttribute(CredentialError):
    pass


class IndexOutOfRange(CredentialError):
    pass


# --------------------------------------------------------------------------
# Schemas and records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemaAttribute:
    name: str
    kind: str
    required: bool = True
    disclosable: bool = True

    def to_obj(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "required": self.required,
            "disclosable": self.disclosable,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SchemaAttribute":
        return cls(obj["name"], obj["kind"], obj["required"], obj["disclosable"])


@dataclass(frozen=True)
class CredentialSchema:
    schema_id: str
    attributes: tuple[SchemaAttribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(names) != len(set(names)):
            raise CredentialError(f"schema {self.schema_id}: attribute names not unique")
        if not any(a.required for a in self.attributes):
            raise CredentialError(f"schema {self.schema_id}: needs at least one required attribute")
        for a in self.attributes:
            if a.kind not in ATTRIBUTE_KINDS:
                raise CredentialError(f"schema {self.schema_id}: unknown kind {a.kind!r}")

    def attribute(self, name: str) -> SchemaAttribute | None:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def to_obj(self) -> dict:
        return {
            "schemaId": self.schema_id,
            "attributes": [a.to_obj() for a in self.attributes],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "CredentialSchema":
        return cls(obj["schemaId"], tuple(SchemaAttribute.from_obj(a) for a in obj["attributes"]))


@dataclass(frozen=True)
class MasterDataRecord:
    record_id: str
    attributes: dict

    def to_obj(self) -> dict:
        return {"recordId": self.record_id, "attributes": dict(self.attributes)}


@dataclass(frozen=True)
class Violation:
    attribute: str
    reason: str  # missing | wrongKind | unknown


def _kind_matches(kind: str, value) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "boolean":
        return isinstance(value, bool)
    return False


def validate_against_schema(record: MasterDataRecord, schema: CredentialSchema) -> list[Violation]:
    """Empty list iff the record conforms; one violation per offence."""
    violations = []
    for attr in schema.attributes:
        if attr.name not in record.attributes:
            if attr.required:
                violations.append(Violation(attr.name, "missing"))
            continue
        if not _kind_matches(attr.kind, record.attributes[attr.name]):
            violations.append(Violation(attr.name, "wrongKind"))
    for name in sorted(record.attributes):
        if schema.attribute(name) is None:
            violations.append(Violation(name, "unknown"))
    return violations


# --------------------------------------------------------------------------
# Status lists
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatusRef:
    list_id: str
    index: int

    def to_obj(self) -> dict:
        return {"listId": self.list_id, "index": self.index}

    @classmethod
    def from_obj(cls, obj: dict) -> "StatusRef":
        return cls(obj["listId"], obj["index"])


@dataclass(frozen=True)
class StatusList:
    """Signed revocation bitstring; bit i lives at byte i//8, LSB first.

    1 = revoked, 0 = valid.  Bits only ever go 0 -> 1: revocation is
    final, updates happen through supersession of the credential.
    """

    list_id: str
    issuer: str
    bits_hex: str
    updated_at: int
    signature: Signature

    def payload_obj(self) -> dict:
        return {
            "listId": self.list_id,
            "issuer": self.issuer,
            "bits": self.bits_hex,
            "updatedAt": self.updated_at,
        }

    def to_obj(self) -> dict:
        obj = self.payload_obj()
        obj["signature"] = self.signature.to_obj()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "StatusList":
        return cls(
            list_id=obj["listId"],
            issuer=obj["issuer"],
            bits_hex=obj["bits"],
            updated_at=obj["updatedAt"],
            signature=Signature.from_obj(obj["signature"]),
        )

    def bit(self, index: int) -> int:
        if not 0 <= index < STATUS_LIST_BITS:
            raise IndexOutOfRange(f"status index {index} outside [0, {STATUS_LIST_BITS})")
        raw = bytes.fromhex(self.bits_hex)
        return (raw[index // 8] >> (index % 8)) & 1

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in bytes.fromhex(self.bits_hex))


def _sign_status_list(list_id: str, issuer: str, bits: bytes, tick: int, key: KeyPair) -> StatusList:
    unsigned = StatusList(list_id, issuer, bits.hex(), tick, Signature(b"\x00" * 64, ""))
    message = crypto.canonicalize(unsigned.payload_obj())
    return replace(unsigned, signature=crypto.sign(key, message, signer=identity.key_reference(issuer)))


def new_status_list(issuer: str, issuer_key: KeyPair, list_id: str, tick: int) -> StatusList:
    if identity.did_for_public_key(issuer_key.public) != issuer:
        raise NotIssuer("key does not belong to the stated issuer")
    return _sign_status_list(list_id, issuer, bytes(STATUS_LIST_BITS // 8), tick, issuer_key)


def revoke(issuer_key: KeyPair, status_list: StatusList, index: int, tick: int) -> StatusList:
    """Set bit ``index`` and re-sign.  Only the issuer may revoke; the old
    list value is unchanged."""
    if identity.did_for_public_key(issuer_key.public) != status_list.issuer:
        raise NotIssuer("only the issuing organization may revoke")
    if not 0 <= index < STATUS_LIST_BITS:
        raise IndexOutOfRange(f"status index {index} outside [0, {STATUS_LIST_BITS})")
    raw = bytearray(bytes.fromhex(status_list.bits_hex))
    raw[index // 8] |= 1 << (index % 8)
    return _sign_status_list(status_list.list_id, status_list.issuer, bytes(raw), tick, issuer_key)


def check_status(status_list: StatusList, index: int) -> str:
    """``Revoked`` iff the bit is set.  The list signature is assumed to be
    verified by the caller."""
    return REVOKED if status_list.bit(index) else VALID


def verify_status_list(status_list: StatusList, resolver: Resolver) -> bool:
    doc = resolver.try_resolve(status_list.issuer)
    if doc is None:
        return False
    public = doc.public_key_for(status_list.signature.signer)
    if public is None:
        return False
    return crypto.verify(public, crypto.canonicalize(status_list.payload_obj()), status_list.signature)


class SlotTable:
    """Issuer-side allocation of status-list slots, sequential per list."""

    def __init__(self) -> None:
        self._used: set[tuple[str, int]] = set()
        self._next: dict[str, int] = {}

    def claim(self, slot: StatusRef) -> None:
        key = (slot.list_id, slot.index)
        if key in self._used:
            raise StatusSlotTaken(f"slot {slot.list_id}[{slot.index}] already allocated")
        if not 0 <= slot.index < STATUS_LIST_BITS:
            raise IndexOutOfRange(f"status index {slot.index} outside [0, {STATUS_LIST_BITS})")
        self._used.add(key)
        self._next[slot.list_id] = max(self._next.get(slot.list_id, 0), slot.index + 1)

    def allocate(self, list_id: str) -> StatusRef:
        slot = StatusRef(list_id, self._next.get(list_id, 0))
        self.claim(slot)
        return slot


# --------------------------------------------------------------------------
# Credentials, disclosures, presentations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Disclosure:
    """Holder-side opening of one salted attribute digest."""

    salt: str  # 16 bytes, hex
    name: str
    value: object

    def digest(self) -> str:
        return crypto.sha256_hex(crypto.canonicalize([self.salt, self.name, self.value]))

    def to_obj(self) -> dict:
        return {"salt": self.salt, "name": self.name, "value": self.value}

    @classmethod
    def from_obj(cls, obj: dict) -> "Disclosure":
        return cls(obj["salt"], obj["name"], obj["value"])


@dataclass(frozen=True)
class MasterDataCredential:
    credential_id: str
    issuer: str
    subject: str
    record_id: str
    schema_id: str
    issued_at: int
    expires_at: int | None
    version: int
    supersedes: str | None
    claims: dict  # {"plain": {...}} and/or {"digests": [...]}
    status: StatusRef
    signature: Signature

    def payload_obj(self) -> dict:
        return {
            "credentialId": self.credential_id,
            "issuer": self.issuer,
            "subject": self.subject,
            "recordId": self.record_id,
            "schemaId": self.schema_id,
            "issuedAt": self.issued_at,
            "expiresAt": self.expires_at,
            "version": self.version,
            "supersedes": self.supersedes,
            "claims": self.claims,
            "status": self.status.to_obj(),
        }

    def to_obj(self) -> dict:
        obj = self.payload_obj()
        obj["signature"] = self.signature.to_obj()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "MasterDataCredential":
        return cls(
            credential_id=obj["credentialId"],
            issuer=obj["issuer"],
            subject=obj["subject"],
            record_id=obj["recordId"],
            schema_id=obj["schemaId"],
            issued_at=obj["issuedAt"],
            expires_at=obj["expiresAt"],
            version=obj["version"],
            supersedes=obj["supersedes"],
            claims=obj["claims"],
            status=StatusRef.from_obj(obj["status"]),
            signature=Signature.from_obj(obj["signature"]),
        )

    def plain_claims(self) -> dict:
        return self.claims.get("plain", {})

    def digests(self) -> list[str]:
        return self.claims.get("digests", [])


def issue(
    issuer_key: KeyPair,
    issuer: str,
    subject: str,
    record: MasterDataRecord,
    schema: CredentialSchema,
    status_slot: StatusRef,
    tick: int,
    *,
    expires_at: int | None = None,
    supersedes: MasterDataCredential | None = None,
    selective_disclosure: bool = False,
    rng_seed: int = 0,
    slot_table: SlotTable | None = None,
) -> tuple[MasterDataCredential, list[Disclosure]]:
    """Issue a credential over a schema-conformant record.

    With selective disclosure, disclosable attributes are replaced by
    salted SHA-256 digests and the openings are returned for the
    holder's wallet; other attributes stay plain.
    """
    violations = validate_against_schema(record, schema)
    if violations:
        raise SchemaViolation(violations)
    if slot_table is not None:
        slot_table.claim(status_slot)
    version = 1
    supersedes_id = None
    if supersedes is not None:
        if (supersedes.issuer, supersedes.subject, supersedes.record_id) != (
            issuer, subject, record.record_id,
        ):
            raise SupersedeMismatch(
                "superseded credential belongs to a different (issuer, subject, recordId)"
            )
        version = supersedes.version + 1
        supersedes_id = supersedes.credential_id

    disclosures: list[Disclosure] = []
    if selective_disclosure:
        rng = random.Random(rng_seed)
        plain = {}
        digests = []
        for name in sorted(record.attributes):
            attr = schema.attribute(name)
            if attr.disclosable:
                salt = rng.randbytes(16).hex()
                disclosure = Disclosure(salt, name, record.attributes[name])
                disclosures.append(disclosure)
                digests.append(disclosure.digest())
            else:
                plain[name] = record.attributes[name]
        claims = {"digests": sorted(digests)}
        if plain:
            claims["plain"] = plain
    else:
        claims = {"plain": dict(record.attributes)}

    unsigned = MasterDataCredential(
        credential_id="",
        issuer=issuer,
        subject=subject,
        record_id=record.record_id,
        schema_id=schema.schema_id,
        issued_at=tick,
        expires_at=expires_at,
        version=version,
        supersedes=supersedes_id,
        claims=claims,
        status=status_slot,
        signature=Signature(b"\x00" * 64, ""),
    )
    credential_id = "vc-" + crypto.digest_of(unsigned.payload_obj())[:16]
    unsigned = replace(unsigned, credential_id=credential_id)
    signature = crypto.sign(
        issuer_key,
        crypto.canonicalize(unsigned.payload_obj()),
        signer=identity.key_reference(issuer),
    )
    return replace(unsigned, signature=signature), disclosures


@dataclass(frozen=True)
class Presentation:
    credential: MasterDataCredential
    disclosed: tuple[Disclosure, ...]
    holder: str
    presented_at: int
    holder_signature: Signature

    def binding_obj(self) -> dict:
        return {
            "credentialId": self.credential.credential_id,
            "digests": sorted(d.digest() for d in self.disclosed),
            "presentedAt": self.presented_at,
        }

    def to_obj(self) -> dict:
        return {
            "credential": self.credential.to_obj(),
            "disclosed": [d.to_obj() for d in self.disclosed],
            "holder": self.holder,
            "presentedAt": self.presented_at,
            "holderSignature": self.holder_signature.to_obj(),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Presentation":
        return cls(
            credential=MasterDataCredential.from_obj(obj["credential"]),
            disclosed=tuple(Disclosure.from_obj(d) for d in obj["disclosed"]),
            holder=obj["holder"],
            presented_at=obj["presentedAt"],
            holder_signature=Signature.from_obj(obj["holderSignature"]),
        )


def present(
    holder_key: KeyPair,
    credential: MasterDataCredential,
    wallet_disclosures: dict,
    disclose_names: list[str],
    tick: int,
) -> Presentation:
    """Build a holder-signed presentation revealing exactly the requested
    attributes.  ``wallet_disclosures`` maps name -> Disclosure for this
    credential."""
    holder = identity.did_for_public_key(holder_key.public)
    if holder != credential.subject:
        raise NotHolder("presentation key does not belong to the credential subject")
    disclosed = []
    for name in sorted(set(disclose_names)):
        if name not in wallet_disclosures:
            raise UnknownAttribute(f"no stored disclosure for attribute {name!r}")
        disclosed.append(wallet_disclosures[name])
    unsigned = Presentation(
        credential=credential,
        disclosed=tuple(disclosed),
        holder=holder,
        presented_at=tick,
        holder_signature=Signature(b"\x00" * 64, ""),
    )
    signature = crypto.sign(
        holder_key,
        crypto.canonicalize(unsigned.binding_obj()),
        signer=identity.key_reference(holder),
    )
    return replace(unsigned, holder_signature=signature)


# --------------------------------------------------------------------------
# Verification pipeline
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    verdict: str
    checks: dict
    verified_at: int

    def to_obj(self) -> dict:
        return {
            "verdict": self.verdict,
            "checks": {k: ("pass" if v else "fail") for k, v in self.checks.items()},
            "verifiedAt": self.verified_at,
        }


def _check_signatures(presentation: Presentation, resolver: Resolver) -> bool:
    credential = presentation.credential
    issuer_doc = resolver.try_resolve(credential.issuer)
    if issuer_doc is None:
        return False
    issuer_key = issuer_doc.public_key_for(credential.signature.signer)
    if issuer_key is None:
        return False
    try:
        if not crypto.verify(
            issuer_key, crypto.canonicalize(credential.payload_obj()), credential.signature
        ):
            return False
    except crypto.CryptoError:
        return False

    if presentation.holder != credential.subject:
        return False
    holder_doc = resolver.try_resolve(presentation.holder)
    if holder_doc is None:
        return False
    holder_key = holder_doc.public_key_for(presentation.holder_signature.signer)
    if holder_key is None:
        return False
    try:
        return crypto.verify(
            holder_key,
            crypto.canonicalize(presentation.binding_obj()),
            presentation.holder_signature,
        )
    except crypto.CryptoError:
        return False


def _check_not_revoked(credential: MasterDataCredential, status_lists: dict, resolver: Resolver) -> bool:
    status_list = status_lists.get(credential.status.list_id)
    if status_list is None:
        return False
    if status_list.issuer != credential.issuer:
        return False
    if not verify_status_list(status_list, resolver):
        return False
    try:
        return check_status(status_list, credential.status.index) == VALID
    except IndexOutOfRange:
        return False


def _check_schema(presentation: Presentation, schemas: dict) -> bool:
    credential = presentation.credential
    schema = schemas.get(credential.schema_id)
    if schema is None:
        return False
    plain = credential.plain_claims()
    if not isinstance(plain, dict):
        return False
    for name, value in plain.items():
        attr = schema.attribute(name)
        if attr is None or not _kind_matches(attr.kind, value):
            return False
    is_sd = "digests" in credential.claims
    if not is_sd:
        # full record is visible: required attributes must all be present
        for attr in schema.attributes:
            if attr.required and attr.name not in plain:
                return False
    else:
        # digested credential: required non-disclosable attributes must be plain
        for attr in schema.attributes:
            if attr.required and not attr.disclosable and attr.name not in plain:
                return False
    for disclosure in presentation.disclosed:
        attr = schema.attribute(disclosure.name)
        if attr is None or not attr.disclosable or not _kind_matches(attr.kind, disclosure.value):
            return False
    return True


def _check_disclosures(presentation: Presentation) -> bool:
    digests = presentation.credential.digests()
    seen = set()
    for disclosure in presentation.disclosed:
        if disclosure.name in seen:
            return False
        seen.add(disclosure.name)
        if len(disclosure.salt) != 32:
            return False
        try:
            bytes.fromhex(disclosure.salt)
        except ValueError:
            return False
        if disclosure.digest() not in digests:
            return False
    return True


def verify_presentation(
    presentation: Presentation,
    resolver: Resolver,
    registry: TrustRegistry,
    status_lists: dict,
    schemas: dict,
    tick: int,
) -> VerificationReport:
    """Run all six checks and fold them into a verdict.

    Total function: every failure mode is a report entry, never an
    exception.  Consults only the resolver, the trust registry, and the
    supplied status-list snapshots."""
    credential = presentation.credential
    checks = {
        "signature": _check_signatures(presentation, resolver),
        "issuerTrusted": identity.is_trusted_issuer(
            registry, credential.issuer, credential.schema_id, tick
        ),
        "notRevoked": _check_not_revoked(credential, status_lists, resolver),
        "notExpired": credential.expires_at is None or tick <= credential.expires_at,
        "schemaConformant": _check_schema(presentation, schemas),
        "disclosuresConsistent": _check_disclosures(presentation),
    }
    verdict = VALID if all(checks.values()) else INVALID
    return VerificationReport(verdict=verdict, checks=checks, verified_at=tick)
