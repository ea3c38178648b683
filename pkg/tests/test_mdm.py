"""Golden-record store: ingest, precedence merge, revalidation, staleness."""

from __future__ import annotations

import itertools
import random

import pytest

from sovereign_mdm import credential as vc
from sovereign_mdm import identity, mdm
from oracles import oracle_precedence_head

SCHEMA = vc.CredentialSchema(
    "mdm:business-partner:v1",
    (
        vc.SchemaAttribute("legalName", "string"),
        vc.SchemaAttribute("address", "string", required=False),
        vc.SchemaAttribute("iban", "string", required=False),
    ),
)


class Rig:
    """Subject org plus two issuers with tiers, wired end to end."""

    def __init__(self):
        self.resolver = identity.Resolver()
        self.operator, _, self.operator_key = identity.create_organization(b"\x70" * 32, 0, self.resolver)
        self.subject, _, self.subject_key = identity.create_organization(b"\x71" * 32, 0, self.resolver)
        self.issuers = {}
        registry = identity.new_registry(self.operator, self.operator_key)
        for label, byte in (("authority", 0x72), ("bank", 0x73)):
            did, _, key = identity.create_organization(bytes([byte]) * 32, 0, self.resolver)
            lst = vc.new_status_list(did, key, f"sl-{label}", 0)
            self.issuers[label] = {"did": did, "key": key, "list": lst, "slots": vc.SlotTable()}
            registry = identity.amend_registry(
                registry, identity.TrustEntry(did, SCHEMA.schema_id, 0, None), self.operator_key
            )
        self.registry = registry
        self.schemas = {SCHEMA.schema_id: SCHEMA}
        self.tiers = mdm.TrustTier({self.issuers["authority"]["did"]: 0, self.issuers["bank"]["did"]: 1})
        self.store = mdm.GoldenStore()

    def status_lists(self):
        return {info["list"].list_id: info["list"] for info in self.issuers.values()}

    def issue(self, issuer_label, attrs, tick, record_id="rec-1", supersedes=None, expires_at=None):
        info = self.issuers[issuer_label]
        record = vc.MasterDataRecord(record_id, attrs)
        return vc.issue(
            info["key"], info["did"], self.subject, record, SCHEMA,
            info["slots"].allocate(info["list"].list_id), tick,
            selective_disclosure=True, rng_seed=tick, supersedes=supersedes,
            expires_at=expires_at,
        )

    def present_all(self, cred, disclosures, tick):
        wallet = {d.name: d for d in disclosures}
        return vc.present(self.subject_key, cred, wallet, list(wallet), tick)

    def verify(self, presentation, tick):
        return vc.verify_presentation(
            presentation, self.resolver, self.registry, self.status_lists(), self.schemas, tick
        )

    def ingest_credential(self, issuer_label, attrs, issue_tick, ingest_tick, **kwargs):
        cred, disclosures = self.issue(issuer_label, attrs, issue_tick, **kwargs)
        pres = self.present_all(cred, disclosures, ingest_tick)
        report = self.verify(pres, ingest_tick)
        assert report.verdict == vc.VALID, report.checks
        mdm.ingest(self.store, report, pres, ingest_tick, self.tiers)
        return cred

    def revoke(self, issuer_label, cred, tick):
        info = self.issuers[issuer_label]
        info["list"] = vc.revoke(info["key"], info["list"], cred.status.index, tick)


@pytest.fixture
def rig():
    return Rig()


def source(issuer, issued_at, version=1, cred_id=None, value="v"):
    return mdm.AttributeSource(
        value=value,
        source_credential_id=cred_id or f"vc-{issuer[-4:]}-{issued_at}-{version}",
        source_issuer=issuer,
        issued_at=issued_at,
        verified_at=issued_at,
        version=version,
        status=vc.StatusRef("sl", 0),
        expires_at=None,
    )


# ---- ingest -----------------------------------------------------------------

def test_first_presentation_adopts_all_disclosed(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG", "address": "Essen"}, 1, 2)
    record = rig.store.get(rig.subject)
    assert set(record.attributes) == {"legalName", "address"}
    assert record.attributes["legalName"].value == "ACME AG"
    assert record.attributes["legalName"].verified_at == 2
    assert record.internal_id == mdm.internal_id_for(rig.subject)


def test_same_issuer_higher_version_wins(rig):
    cred_v1 = rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    rig.ingest_credential(
        "authority", {"legalName": "ACME SE"}, 5, 6, supersedes=cred_v1
    )
    record = rig.store.get(rig.subject)
    assert record.attributes["legalName"].value == "ACME SE"
    assert record.attributes["legalName"].version == 2


def test_invalid_report_rejected(rig):
    cred, disclosures = rig.issue("authority", {"legalName": "ACME AG"}, 1)
    pres = rig.present_all(cred, disclosures, 2)
    report = vc.verify_presentation(pres, rig.resolver, rig.registry, {}, rig.schemas, 2)
    assert report.verdict == vc.INVALID
    with pytest.raises(mdm.RejectedInvalid):
        mdm.ingest(rig.store, report, pres, 2, rig.tiers)
    assert rig.store.get(rig.subject) is None


def test_lower_tier_does_not_displace_higher_tier(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    rig.ingest_credential("bank", {"legalName": "Acme (bank view)", "iban": "DE02"}, 5, 6)
    record = rig.store.get(rig.subject)
    # trust beats recency: tier-0 authority keeps legalName
    assert record.attributes["legalName"].value == "ACME AG"
    # bank contributes the attribute nobody else attested
    assert record.attributes["iban"].value == "DE02"


def test_representation_refreshes_verified_at(rig):
    cred, disclosures = rig.issue("authority", {"legalName": "ACME AG"}, 1)
    pres = rig.present_all(cred, disclosures, 2)
    report = rig.verify(pres, 2)
    mdm.ingest(rig.store, report, pres, 2, rig.tiers)
    assert rig.store.get(rig.subject).attributes["legalName"].verified_at == 2
    # the same credential re-presented and re-verified later refreshes the stamp
    pres_again = rig.present_all(cred, disclosures, 9)
    report_again = rig.verify(pres_again, 9)
    delta = mdm.ingest(rig.store, report_again, pres_again, 9, rig.tiers)
    assert [d["change"] for d in delta] == ["refreshed"]
    assert rig.store.get(rig.subject).attributes["legalName"].verified_at == 9


# ---- mergePrecedence -----------------------------------------------------------

def test_identical_sources_keep_a(rig):
    a = source(rig.issuers["authority"]["did"], 3)
    b = source(rig.issuers["authority"]["did"], 3, cred_id=a.source_credential_id)
    assert mdm.merge_precedence(a, b, rig.tiers) is a


def test_tier_beats_recency(rig):
    old_tier0 = source(rig.issuers["authority"]["did"], 1)
    new_tier1 = source(rig.issuers["bank"]["did"], 50)
    winner = mdm.merge_precedence(old_tier0, new_tier1, rig.tiers)
    assert winner is old_tier0
    # oracle agreement
    tiers_by_did = {rig.issuers["authority"]["did"]: 0, rig.issuers["bank"]["did"]: 1}
    oracle = oracle_precedence_head(
        [_as_dict(old_tier0), _as_dict(new_tier1)], tiers_by_did, 9
    )
    assert oracle["credentialId"] == winner.source_credential_id


def test_equal_tier_equal_tick_lexicographic_issuer(rig):
    issuer_x = "did:mdm:" + "1" * 32
    issuer_y = "did:mdm:" + "2" * 32
    tiers = mdm.TrustTier({issuer_x: 3, issuer_y: 3})
    a = source(issuer_y, 7)
    b = source(issuer_x, 7)
    assert mdm.merge_precedence(a, b, tiers) is b


def _as_dict(src):
    return {
        "issuer": src.source_issuer,
        "issuedAt": src.issued_at,
        "version": src.version,
        "credentialId": src.source_credential_id,
    }


def test_precedence_matches_sort_oracle_on_fixtures():
    rng = random.Random(21)
    issuers = ["did:mdm:" + c * 32 for c in "abcd"]
    tiers_map = {issuers[0]: 0, issuers[1]: 1, issuers[2]: 1}
    tiers = mdm.TrustTier(tiers_map, default=9)
    for _ in range(200):
        candidates = [
            source(rng.choice(issuers), rng.randrange(0, 10), version=rng.randrange(1, 4),
                   cred_id=f"vc-{rng.randrange(10**6):06d}")
            for _ in range(rng.randrange(2, 6))
        ]
        winner = candidates[0]
        for challenger in candidates[1:]:
            winner = mdm.merge_precedence(winner, challenger, tiers)
        oracle = oracle_precedence_head([_as_dict(c) for c in candidates], tiers_map, 9)
        assert oracle["credentialId"] == winner.source_credential_id


def test_merge_order_independence_of_winner():
    issuers = ["did:mdm:" + c * 32 for c in "xyz"]
    tiers = mdm.TrustTier({issuers[0]: 0, issuers[1]: 1, issuers[2]: 2})
    candidates = [
        source(issuers[2], 9, cred_id="vc-c"),
        source(issuers[0], 1, cred_id="vc-a"),
        source(issuers[1], 5, cred_id="vc-b"),
    ]
    winners = set()
    for perm in itertools.permutations(candidates):
        winner = perm[0]
        for challenger in perm[1:]:
            winner = mdm.merge_precedence(winner, challenger, tiers)
        winners.add((winner.source_credential_id, winner.value))
    assert len(winners) == 1


# ---- revalidate -----------------------------------------------------------------

def test_nothing_revoked_empty_invalidations_staleness_grows(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    assert mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 10) == []
    record = rig.store.get(rig.subject)
    assert record.staleness("legalName", 12) == 10


def test_revoked_source_flagged_others_untouched(rig):
    cred_auth = rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    rig.ingest_credential("bank", {"legalName": "Acme KG", "iban": "DE02"}, 3, 4)
    rig.revoke("authority", cred_auth, 5)
    invalidations = mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 6)
    assert len(invalidations) == 1
    assert invalidations[0]["attribute"] == "legalName"
    assert invalidations[0]["reason"] == "revoked"
    record = rig.store.get(rig.subject)
    assert record.attributes["legalName"].invalid
    assert record.attributes["legalName"].value == "ACME AG"  # value retained
    assert not record.attributes["iban"].invalid


def test_expired_source_flagged(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2, expires_at=5)
    # at the boundary tick the source is still fine (strict inequality)
    assert mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 5) == []
    invalidations = mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 6)
    assert [i["reason"] for i in invalidations] == ["expired"]
    assert rig.store.get(rig.subject).attributes["legalName"].invalid


def test_superseding_credential_clears_flag_and_bumps_version(rig):
    cred_v1 = rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    rig.revoke("authority", cred_v1, 3)
    mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 4)
    assert rig.store.get(rig.subject).attributes["legalName"].invalid
    rig.ingest_credential("authority", {"legalName": "ACME SE"}, 5, 6, supersedes=cred_v1)
    record = rig.store.get(rig.subject)
    attr = record.attributes["legalName"]
    assert not attr.invalid
    assert attr.version == 2
    assert attr.value == "ACME SE"
    assert mdm.revalidate(rig.store, rig.resolver, rig.status_lists(), 7) == []


# ---- stalenessReport ---------------------------------------------------------------

def test_fresh_store_threshold_zero_empty(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG"}, 1, 2)
    assert mdm.staleness_report(rig.store, 2, 0) == []


def test_single_stale_attribute(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG"}, 0, 0)
    report = mdm.staleness_report(rig.store, 10, 5)
    assert len(report) == 1
    assert report[0]["staleness"] == 10
    assert report[0]["attribute"] == "legalName"


def test_mixed_store_ordering_matches_naive_sort(rig):
    rig.ingest_credential("authority", {"legalName": "ACME AG", "address": "Essen"}, 0, 0)
    rig.ingest_credential("bank", {"legalName": "Acme KG", "iban": "DE02"}, 0, 4)
    report = mdm.staleness_report(rig.store, 10, 0)
    naive = sorted(
        report, key=lambda row: (-row["staleness"], row["internalId"], row["attribute"])
    )
    assert report == naive
    assert [row["staleness"] for row in report] == [10, 10, 6]
