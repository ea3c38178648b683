"""Consumer-side golden records built from verified presentations.

External subjects map to internal golden records; each attribute value
is traceable to exactly one verified credential.  Conflicting sources
merge attribute-by-attribute under a deterministic precedence order,
revoked or expired sources are flagged (never silently dropped), and
staleness counts ticks since an attribute was last verified.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import credential as vc
from . import crypto
from .credential import Presentation, StatusRef, VerificationReport
from .errors import Error
from .identity import Resolver


class MdmError(Error):
    pass


class RejectedInvalid(MdmError):
    """An Invalid report was handed to ingest: a programming error at the
    call site, never a data condition."""


@dataclass(frozen=True)
class TrustTier:
    """Scenario-level issuer ranking; lower rank wins. Not protocol data."""

    ranks: dict
    default: int = 9

    def rank(self, issuer: str) -> int:
        value = self.ranks.get(issuer, self.default)
        if value < 0:
            raise MdmError("tier ranks must be non-negative")
        return value


@dataclass(frozen=True)
class AttributeSource:
    """Provenance of one golden-record attribute value."""

    value: object
    source_credential_id: str
    source_issuer: str
    issued_at: int
    verified_at: int
    version: int
    status: StatusRef
    expires_at: int | None
    invalid: bool = False

    def to_obj(self) -> dict:
        return {
            "value": self.value,
            "sourceCredentialId": self.source_credential_id,
            "sourceIssuer": self.source_issuer,
            "issuedAt": self.issued_at,
            "verifiedAt": self.verified_at,
            "version": self.version,
            "statusListId": self.status.list_id,
            "statusIndex": self.status.index,
            "expiresAt": self.expires_at,
            "invalid": self.invalid,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AttributeSource":
        return cls(
            value=obj["value"],
            source_credential_id=obj["sourceCredentialId"],
            source_issuer=obj["sourceIssuer"],
            issued_at=obj["issuedAt"],
            verified_at=obj["verifiedAt"],
            version=obj["version"],
            status=StatusRef(obj["statusListId"], obj["statusIndex"]),
            expires_at=obj["expiresAt"],
            invalid=obj["invalid"],
        )


@dataclass
class GoldenRecord:
    internal_id: str
    subject: str
    attributes: dict  # name -> AttributeSource

    def to_obj(self) -> dict:
        return {
            "internalId": self.internal_id,
            "subject": self.subject,
            "attributes": {name: src.to_obj() for name, src in sorted(self.attributes.items())},
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "GoldenRecord":
        return cls(
            internal_id=obj["internalId"],
            subject=obj["subject"],
            attributes={
                name: AttributeSource.from_obj(src) for name, src in obj["attributes"].items()
            },
        )

    def staleness(self, name: str, tick: int) -> int:
        return tick - self.attributes[name].verified_at


def internal_id_for(subject: str) -> str:
    """Deterministic internal key for an external subject identity."""
    return "gr-" + crypto.sha256_hex(subject.encode("utf-8"))[:16]


class GoldenStore:
    """Per-organization golden-record store, single writer."""

    def __init__(self) -> None:
        self.records: dict[str, GoldenRecord] = {}

    def record_for(self, subject: str) -> GoldenRecord:
        internal_id = internal_id_for(subject)
        record = self.records.get(internal_id)
        if record is None:
            record = GoldenRecord(internal_id=internal_id, subject=subject, attributes={})
            self.records[internal_id] = record
        return record

    def get(self, subject: str) -> GoldenRecord | None:
        return self.records.get(internal_id_for(subject))

    def to_obj(self) -> dict:
        return {iid: record.to_obj() for iid, record in sorted(self.records.items())}


def merge_precedence(a: AttributeSource, b: AttributeSource, tiers: TrustTier) -> AttributeSource:
    """Pick the winning source: tier rank ascending, then issuedAt
    descending, then issuer ascending; ties fall back to version
    descending and credentialId ascending so the order is total.
    Identical keys keep ``a`` (stability)."""
    key_a = (tiers.rank(a.source_issuer), -a.issued_at, a.source_issuer,
             -a.version, a.source_credential_id)
    key_b = (tiers.rank(b.source_issuer), -b.issued_at, b.source_issuer,
             -b.version, b.source_credential_id)
    return b if key_b < key_a else a


def _sources_from_presentation(presentation: Presentation, tick: int) -> dict:
    cred = presentation.credential
    revealed = dict(cred.plain_claims())
    for disclosure in presentation.disclosed:
        revealed[disclosure.name] = disclosure.value
    return {
        name: AttributeSource(
            value=value,
            source_credential_id=cred.credential_id,
            source_issuer=cred.issuer,
            issued_at=cred.issued_at,
            verified_at=tick,
            version=cred.version,
            status=cred.status,
            expires_at=cred.expires_at,
        )
        for name, value in revealed.items()
    }


def ingest(
    store: GoldenStore,
    report: VerificationReport,
    presentation: Presentation,
    tick: int,
    tiers: TrustTier,
) -> list[dict]:
    """Fold one verified presentation into the golden store.

    Returns the delta: one entry per attribute adopted or refreshed.
    Only Valid reports may be ingested.
    """
    if report.verdict != vc.VALID:
        raise RejectedInvalid("ingest called with an Invalid verification report")
    record = store.record_for(presentation.credential.subject)
    delta = []
    for name, incoming in sorted(_sources_from_presentation(presentation, tick).items()):
        current = record.attributes.get(name)
        if current is None:
            record.attributes[name] = incoming
            delta.append({"attribute": name, "change": "adopted", "value": incoming.value})
            continue
        winner = merge_precedence(current, incoming, tiers)
        if winner is incoming:
            record.attributes[name] = incoming
            delta.append({"attribute": name, "change": "replaced", "value": incoming.value})
        elif current.source_credential_id == incoming.source_credential_id:
            # same source re-verified now: refresh the timestamp, clear nothing
            record.attributes[name] = replace(current, verified_at=tick, invalid=False)
            delta.append({"attribute": name, "change": "refreshed", "value": current.value})
    return delta


def revalidate(
    store: GoldenStore,
    resolver: Resolver,
    status_lists: dict,
    tick: int,
) -> list[dict]:
    """Re-run status and expiry checks for every attribute source.

    Sources now revoked or expired are flagged invalid (value retained)
    and reported; verification timestamps are untouched, so staleness
    keeps accruing until a fresh presentation arrives.
    """
    invalidations = []
    for internal_id in sorted(store.records):
        record = store.records[internal_id]
        for name in sorted(record.attributes):
            source = record.attributes[name]
            reason = None
            status_list = status_lists.get(source.status.list_id)
            if status_list is None or not vc.verify_status_list(status_list, resolver):
                reason = "statusUnavailable"
            elif vc.check_status(status_list, source.status.index) == vc.REVOKED:
                reason = "revoked"
            elif source.expires_at is not None and tick > source.expires_at:
                reason = "expired"
            if reason is None:
                continue
            if not source.invalid:
                record.attributes[name] = replace(source, invalid=True)
            invalidations.append(
                {
                    "internalId": internal_id,
                    "attribute": name,
                    "reason": reason,
                    "sourceCredentialId": source.source_credential_id,
                }
            )
    return invalidations


def staleness_report(store: GoldenStore, tick: int, threshold: int) -> list[dict]:
    """All attributes staler than ``threshold`` ticks, most stale first."""
    if threshold < 0:
        raise MdmError("threshold must be non-negative")
    rows = []
    for internal_id in sorted(store.records):
        record = store.records[internal_id]
        for name in sorted(record.attributes):
            staleness = record.staleness(name, tick)
            if staleness > threshold:
                rows.append(
                    {"internalId": internal_id, "attribute": name, "staleness": staleness}
                )
    rows.sort(key=lambda row: (-row["staleness"], row["internalId"], row["attribute"]))
    return rows
