"""Usage policies and contract negotiation.

A small ODRL subset (three actions, four constraint dimensions) with
default-deny, deny-overrides evaluation, plus the staged negotiation
protocol that binds a doubly signed agreement to every policy-gated
transfer.  ``elapsedTick`` constraints are evaluated relative to the
agreement tick, so policies stay portable across scenario offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import crypto, identity
from .crypto import KeyPair, Signature
from .errors import Error
from .identity import Resolver

ACTIONS = ("use", "read", "distribute")
DIMENSIONS = ("elapsedTick", "purpose", "useCount", "region")
OPERATORS = ("eq", "lteq", "gteq")

PERMIT = "Permit"
DENY = "Deny"

REQUESTED = "REQUESTED"
OFFERED = "OFFERED"
ACCEPTED = "ACCEPTED"
AGREED = "AGREED"
FINALIZED = "FINALIZED"
TERMINATED = "TERMINATED"

STATES = (REQUESTED, OFFERED, ACCEPTED, AGREED, FINALIZED, TERMINATED)
EVENTS = ("offer", "accept", "agree", "finalize", "terminate")

MAX_RULES = 32


class PolicyError(Error):
    pass


class MalformedPolicy(PolicyError):
    pass


class IllegalTransition(PolicyError):
    pass


class WrongActor(PolicyError):
    pass


class WrongState(PolicyError):
    pass


# --------------------------------------------------------------------------
# Policies and evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    dimension: str
    operator: str
    value: object

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise MalformedPolicy(f"unknown constraint dimension {self.dimension!r}")
        if self.operator not in OPERATORS:
            raise MalformedPolicy(f"unknown operator {self.operator!r}")
        if self.dimension in ("purpose", "region") and self.operator != "eq":
            raise MalformedPolicy(f"{self.dimension} only supports eq")
        if self.dimension in ("elapsedTick", "useCount") and not isinstance(self.value, int):
            raise MalformedPolicy(f"{self.dimension} needs an integer bound")

    def to_obj(self) -> dict:
        return {"dimension": self.dimension, "operator": self.operator, "value": self.value}

    @classmethod
    def from_obj(cls, obj: dict) -> "Constraint":
        return cls(obj["dimension"], obj["operator"], obj["value"])


@dataclass(frozen=True)
class Rule:
    action: str
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise MalformedPolicy(f"unknown action {self.action!r}")

    def to_obj(self) -> dict:
        return {"action": self.action, "constraints": [c.to_obj() for c in self.constraints]}

    @classmethod
    def from_obj(cls, obj: dict) -> "Rule":
        return cls(obj["action"], tuple(Constraint.from_obj(c) for c in obj["constraints"]))


@dataclass(frozen=True)
class UsagePolicy:
    policy_id: str
    assigner: str
    permissions: tuple[Rule, ...] = ()
    prohibitions: tuple[Rule, ...] = ()

    def __post_init__(self):
        if len(self.permissions) + len(self.prohibitions) > MAX_RULES:
            raise MalformedPolicy(f"policy {self.policy_id}: more than {MAX_RULES} rules")

    def to_obj(self) -> dict:
        return {
            "policyId": self.policy_id,
            "assigner": self.assigner,
            "permissions": [r.to_obj() for r in self.permissions],
            "prohibitions": [r.to_obj() for r in self.prohibitions],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "UsagePolicy":
        return cls(
            policy_id=obj["policyId"],
            assigner=obj["assigner"],
            permissions=tuple(Rule.from_obj(r) for r in obj["permissions"]),
            prohibitions=tuple(Rule.from_obj(r) for r in obj["prohibitions"]),
        )


@dataclass(frozen=True)
class UsageContext:
    """Evaluation input.  ``tick`` is relative to the agreement (elapsed
    ticks); ``prior_use_count`` counts already-permitted uses."""

    action: str
    purpose: str = ""
    tick: int = 0
    region: str = ""
    prior_use_count: int = 0

    def __post_init__(self):
        if self.prior_use_count < 0:
            raise MalformedPolicy("priorUseCount must be non-negative")


def _constraint_satisfied(constraint: Constraint, ctx: UsageContext) -> bool:
    if constraint.dimension == "elapsedTick":
        left = ctx.tick
    elif constraint.dimension == "purpose":
        left = ctx.purpose
    elif constraint.dimension == "region":
        left = ctx.region
    else:  # useCount compares the prospective use number
        left = ctx.prior_use_count + 1
    if constraint.operator == "eq":
        return left == constraint.value
    if constraint.operator == "lteq":
        return left <= constraint.value
    return left >= constraint.value


def _rule_matches(rule: Rule, ctx: UsageContext) -> bool:
    # constraints are conjunctive within a rule
    return rule.action == ctx.action and all(
        _constraint_satisfied(c, ctx) for c in rule.constraints
    )


def evaluate(policy: UsagePolicy, ctx: UsageContext) -> str:
    """Deny if any prohibition matches; else Permit if any permission
    matches; else Deny (default-deny)."""
    if any(_rule_matches(rule, ctx) for rule in policy.prohibitions):
        return DENY
    if any(_rule_matches(rule, ctx) for rule in policy.permissions):
        return PERMIT
    return DENY


# --------------------------------------------------------------------------
# Negotiation state machine
# --------------------------------------------------------------------------

# state -> event -> (next state, permitted actor: "provider"|"consumer"|"either")
_TRANSITIONS = {
    REQUESTED: {"offer": (OFFERED, "provider")},
    OFFERED: {"accept": (ACCEPTED, "consumer")},
    ACCEPTED: {"agree": (AGREED, "provider")},
    AGREED: {"finalize": (FINALIZED, "either")},
}


@dataclass(frozen=True)
class TranscriptEvent:
    payload: dict
    signature: Signature

    def to_obj(self) -> dict:
        return {"payload": self.payload, "signature": self.signature.to_obj()}

    @classmethod
    def from_obj(cls, obj: dict) -> "TranscriptEvent":
        return cls(obj["payload"], Signature.from_obj(obj["signature"]))


@dataclass(frozen=True)
class Negotiation:
    negotiation_id: str
    provider: str
    consumer: str
    asset_id: str
    state: str
    offered_policy: UsagePolicy | None
    transcript: tuple[TranscriptEvent, ...]

    def to_obj(self) -> dict:
        return {
            "negotiationId": self.negotiation_id,
            "provider": self.provider,
            "consumer": self.consumer,
            "assetId": self.asset_id,
            "state": self.state,
            "offeredPolicy": self.offered_policy.to_obj() if self.offered_policy else None,
            "transcript": [e.to_obj() for e in self.transcript],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Negotiation":
        return cls(
            negotiation_id=obj["negotiationId"],
            provider=obj["provider"],
            consumer=obj["consumer"],
            asset_id=obj["assetId"],
            state=obj["state"],
            offered_policy=(
                UsagePolicy.from_obj(obj["offeredPolicy"]) if obj["offeredPolicy"] else None
            ),
            transcript=tuple(TranscriptEvent.from_obj(e) for e in obj["transcript"]),
        )


def _signed_event(
    negotiation_id: str, event: str, from_state: str, to_state: str,
    actor: str, key: KeyPair, tick: int,
) -> TranscriptEvent:
    payload = {
        "negotiationId": negotiation_id,
        "event": event,
        "from": from_state,
        "to": to_state,
        "actor": actor,
        "tick": tick,
    }
    signature = crypto.sign(key, crypto.canonicalize(payload), signer=identity.key_reference(actor))
    return TranscriptEvent(payload, signature)


def open_negotiation(
    provider: str, consumer: str, asset_id: str, consumer_key: KeyPair, tick: int
) -> Negotiation:
    """Consumer opens a negotiation; the initial REQUESTED state carries a
    consumer-signed request event."""
    actor = identity.did_for_public_key(consumer_key.public)
    if actor != consumer:
        raise WrongActor("negotiations are opened by the consumer")
    negotiation_id = "neg-" + crypto.digest_of(
        {"provider": provider, "consumer": consumer, "assetId": asset_id, "tick": tick}
    )[:16]
    event = _signed_event(negotiation_id, "request", "", REQUESTED, consumer, consumer_key, tick)
    return Negotiation(
        negotiation_id=negotiation_id,
        provider=provider,
        consumer=consumer,
        asset_id=asset_id,
        state=REQUESTED,
        offered_policy=None,
        transcript=(event,),
    )


def transition(
    neg: Negotiation,
    event: str,
    actor_key: KeyPair,
    tick: int,
    policy: UsagePolicy | None = None,
) -> Negotiation:
    """Fire one negotiation event and return the new negotiation value.

    Legal flow: REQUESTED -offer(provider)-> OFFERED -accept(consumer)->
    ACCEPTED -agree(provider)-> AGREED -finalize(either)-> FINALIZED;
    terminate is legal from any non-FINALIZED state by either party.
    """
    if event not in EVENTS:
        raise IllegalTransition(f"unknown event {event!r}")
    actor = identity.did_for_public_key(actor_key.public)
    if event == "terminate":
        if neg.state == FINALIZED:
            raise IllegalTransition("FINALIZED negotiations cannot be terminated")
        next_state, permitted = TERMINATED, "either"
    else:
        row = _TRANSITIONS.get(neg.state, {})
        if event not in row:
            raise IllegalTransition(f"{event} is not legal in state {neg.state}")
        next_state, permitted = row[event]
    if permitted == "provider" and actor != neg.provider:
        raise WrongActor(f"{event} may only be fired by the provider")
    if permitted == "consumer" and actor != neg.consumer:
        raise WrongActor(f"{event} may only be fired by the consumer")
    if permitted == "either" and actor not in (neg.provider, neg.consumer):
        raise WrongActor(f"{event} may only be fired by a negotiation party")

    if event == "offer":
        if policy is None:
            raise PolicyError("offer requires a policy")
        neg = replace(neg, offered_policy=policy)
    signed = _signed_event(neg.negotiation_id, event, neg.state, next_state, actor, actor_key, tick)
    return replace(neg, state=next_state, transcript=neg.transcript + (signed,))


def verify_transcript(neg: Negotiation, resolver: Resolver) -> bool:
    """Every transcript event must be signed by the party that fired it."""
    for event in neg.transcript:
        actor = event.payload.get("actor")
        if actor not in (neg.provider, neg.consumer):
            return False
        doc = resolver.try_resolve(actor)
        if doc is None:
            return False
        public = doc.public_key_for(event.signature.signer)
        if public is None:
            return False
        if not crypto.verify(public, crypto.canonicalize(event.payload), event.signature):
            return False
    return True


# --------------------------------------------------------------------------
# Contract agreements
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractAgreement:
    agreement_id: str
    negotiation_id: str
    policy: UsagePolicy
    provider: str
    consumer: str
    agreed_at: int
    provider_signature: Signature
    consumer_signature: Signature

    def payload_obj(self) -> dict:
        return {
            "agreementId": self.agreement_id,
            "negotiationId": self.negotiation_id,
            "policy": self.policy.to_obj(),
            "provider": self.provider,
            "consumer": self.consumer,
            "agreedAt": self.agreed_at,
        }

    def to_obj(self) -> dict:
        obj = self.payload_obj()
        obj["providerSignature"] = self.provider_signature.to_obj()
        obj["consumerSignature"] = self.consumer_signature.to_obj()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ContractAgreement":
        return cls(
            agreement_id=obj["agreementId"],
            negotiation_id=obj["negotiationId"],
            policy=UsagePolicy.from_obj(obj["policy"]),
            provider=obj["provider"],
            consumer=obj["consumer"],
            agreed_at=obj["agreedAt"],
            provider_signature=Signature.from_obj(obj["providerSignature"]),
            consumer_signature=Signature.from_obj(obj["consumerSignature"]),
        )


def draft_agreement(neg: Negotiation, tick: int) -> ContractAgreement:
    """Unsigned agreement embedding the offered policy of an AGREED
    negotiation; each party signs its half separately."""
    if neg.state != AGREED:
        raise WrongState(f"agreement requires state AGREED, negotiation is {neg.state}")
    if neg.offered_policy is None:
        raise PolicyError("negotiation reached AGREED without an offered policy")
    agreement_id = "agr-" + crypto.digest_of({"negotiationId": neg.negotiation_id, "tick": tick})[:16]
    empty = Signature(b"\x00" * 64, "")
    return ContractAgreement(
        agreement_id=agreement_id,
        negotiation_id=neg.negotiation_id,
        policy=neg.offered_policy,
        provider=neg.provider,
        consumer=neg.consumer,
        agreed_at=tick,
        provider_signature=empty,
        consumer_signature=empty,
    )


def sign_agreement(agreement: ContractAgreement, key: KeyPair, party: str) -> ContractAgreement:
    actor = identity.did_for_public_key(key.public)
    message = crypto.canonicalize(agreement.payload_obj())
    signature = crypto.sign(key, message, signer=identity.key_reference(actor))
    if party == "provider":
        if actor != agreement.provider:
            raise WrongActor("provider signature must come from the provider key")
        return replace(agreement, provider_signature=signature)
    if party == "consumer":
        if actor != agreement.consumer:
            raise WrongActor("consumer signature must come from the consumer key")
        return replace(agreement, consumer_signature=signature)
    raise PolicyError(f"unknown party {party!r}")


def conclude_agreement(
    neg: Negotiation, provider_key: KeyPair, consumer_key: KeyPair, tick: int
) -> ContractAgreement:
    """Doubly signed agreement for an AGREED negotiation; transfer
    authorization exists only through this object."""
    agreement = draft_agreement(neg, tick)
    agreement = sign_agreement(agreement, provider_key, "provider")
    return sign_agreement(agreement, consumer_key, "consumer")


def verify_agreement(agreement: ContractAgreement, resolver: Resolver) -> bool:
    message = crypto.canonicalize(agreement.payload_obj())
    for did, signature in (
        (agreement.provider, agreement.provider_signature),
        (agreement.consumer, agreement.consumer_signature),
    ):
        doc = resolver.try_resolve(did)
        if doc is None:
            return False
        public = doc.public_key_for(signature.signer)
        if public is None:
            return False
        try:
            if not crypto.verify(public, message, signature):
                return False
        except crypto.CryptoError:
            return False
    return True


class UseLedger:
    """Per-agreement counter of permitted uses; the single serialization
    point for useCount constraints."""

    def __init__(self) -> None:
        self._counts: dict[str, int] = {}

    def count(self, agreement_id: str) -> int:
        return self._counts.get(agreement_id, 0)

    def increment(self, agreement_id: str) -> int:
        self._counts[agreement_id] = self.count(agreement_id) + 1
        return self._counts[agreement_id]

    def to_obj(self) -> dict:
        return dict(sorted(self._counts.items()))


def authorize_use(agreement: ContractAgreement, ctx: UsageContext, ledger: UseLedger) -> str:
    """Evaluate the agreement's policy for a prospective use.

    ``ctx.tick`` is the absolute tick; evaluation happens with the
    elapsed tick since agreedAt and the ledger's prior-use count.  On
    Permit, the ledger is incremented.
    """
    effective = UsageContext(
        action=ctx.action,
        purpose=ctx.purpose,
        tick=ctx.tick - agreement.agreed_at,
        region=ctx.region,
        prior_use_count=ledger.count(agreement.agreement_id),
    )
    decision = evaluate(agreement.policy, effective)
    if decision == PERMIT:
        ledger.increment(agreement.agreement_id)
    return decision
