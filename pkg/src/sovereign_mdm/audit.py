"""Append-only Merkle audit log over content-blind exchange events.

Tree construction follows the transparency-log conventions: leaves are
hashed with a 0x00 domain-separation prefix, interior nodes with 0x01,
and subtrees split at the largest power of two strictly less than the
node count.  The empty tree commits to sha256 of empty input.  The log
stores event digests only; attribute values never enter it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import crypto
from .errors import Error

EVENT_TYPES = (
    "Issued",
    "Presented",
    "Verified",
    "Revoked",
    "NegotiationTransition",
    "AgreementConcluded",
    "UseAuthorized",
    "DisputeRaised",
)

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


class AuditError(Error):
    pass


class IndexOutOfRange(AuditError):
    pass


class SizeOutOfRange(AuditError):
    pass


@dataclass(frozen=True)
class AuditEvent:
    """One exchange event; contentDigest hides the payload the actor holds
    privately."""

    event_type: str
    actor: str
    counterparty: str | None
    content_digest: str
    tick: int

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise AuditError(f"unknown event type {self.event_type!r}")

    def to_obj(self) -> dict:
        return {
            "eventType": self.event_type,
            "actor": self.actor,
            "counterparty": self.counterparty,
            "contentDigest": self.content_digest,
            "tick": self.tick,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AuditEvent":
        return cls(
            event_type=obj["eventType"],
            actor=obj["actor"],
            counterparty=obj["counterparty"],
            content_digest=obj["contentDigest"],
            tick=obj["tick"],
        )


def event_for(event_type: str, actor: str, counterparty: str | None, payload, tick: int) -> AuditEvent:
    """Build an event whose contentDigest commits to ``payload`` without
    recording it."""
    return AuditEvent(event_type, actor, counterparty, crypto.digest_of(payload), tick)


# --------------------------------------------------------------------------
# Tree math
# --------------------------------------------------------------------------

def _hash_leaf(data: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def _hash_node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


def _split(n: int) -> int:
    # largest power of two strictly below n
    k = 1
    while 2 * k < n:
        k *= 2
    return k


def _subtree_root(leaves) -> bytes:
    n = len(leaves)
    if n == 1:
        return leaves[0]
    k = _split(n)
    return _hash_node(_subtree_root(leaves[:k]), _subtree_root(leaves[k:]))


class AuditTree:
    """Single-appender Merkle log; proofs are computed from snapshots of
    the leaf list, so readers are never blocked."""

    def __init__(self) -> None:
        self._leaves: list[bytes] = []

    @property
    def size(self) -> int:
        return len(self._leaves)

    def leaf(self, index: int) -> bytes:
        return self._leaves[index]

    def append_leaf(self, data: bytes) -> int:
        index = len(self._leaves)
        self._leaves.append(_hash_leaf(data))
        return index

    def append(self, event: AuditEvent) -> int:
        """Append sha256(0x00 || canonical(event)); returns the leaf index."""
        return self.append_leaf(crypto.canonicalize(event.to_obj()))

    def root(self, size: int | None = None) -> str:
        """Tree head over the first ``size`` leaves (hex)."""
        if size is None:
            size = len(self._leaves)
        if not 0 <= size <= len(self._leaves):
            raise SizeOutOfRange(f"size {size} outside [0, {len(self._leaves)}]")
        if size == 0:
            return hashlib.sha256(b"").hexdigest()
        return _subtree_root(self._leaves[:size]).hex()

    def prove_inclusion(self, leaf_index: int, size: int | None = None) -> "InclusionProof":
        if size is None:
            size = len(self._leaves)
        if not 0 <= leaf_index < size or size > len(self._leaves):
            raise IndexOutOfRange(f"leaf {leaf_index} not within tree of size {size}")
        path = _audit_path(leaf_index, self._leaves[:size])
        return InclusionProof(leaf_index, size, tuple(h.hex() for h in path))

    def prove_consistency(self, old_size: int, new_size: int | None = None) -> "ConsistencyProof":
        if new_size is None:
            new_size = len(self._leaves)
        if not 0 < old_size <= new_size or new_size > len(self._leaves):
            raise SizeOutOfRange(f"need 0 < old <= new <= {len(self._leaves)}")
        if old_size == new_size:
            nodes: list[bytes] = []
        else:
            nodes = _consistency_nodes(old_size, self._leaves[:new_size], True)
        return ConsistencyProof(old_size, new_size, tuple(h.hex() for h in nodes))

    # mutation hook for adversarial simulation; never part of honest use
    def rewrite_leaf(self, index: int, data: bytes) -> None:
        self._leaves[index] = _hash_leaf(data)


def _audit_path(index: int, leaves) -> list[bytes]:
    n = len(leaves)
    if n == 1:
        return []
    k = _split(n)
    if index < k:
        return _audit_path(index, leaves[:k]) + [_subtree_root(leaves[k:])]
    return _audit_path(index - k, leaves[k:]) + [_subtree_root(leaves[:k])]


def _consistency_nodes(m: int, leaves, whole: bool) -> list[bytes]:
    n = len(leaves)
    if m == n:
        return [] if whole else [_subtree_root(leaves)]
    k = _split(n)
    if m <= k:
        return _consistency_nodes(m, leaves[:k], whole) + [_subtree_root(leaves[k:])]
    return _consistency_nodes(m - k, leaves[k:], False) + [_subtree_root(leaves[:k])]


# --------------------------------------------------------------------------
# Proof objects and verification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InclusionProof:
    leaf_index: int
    tree_size: int
    path: tuple[str, ...]

    def to_obj(self) -> dict:
        return {
            "leafIndex": self.leaf_index,
            "treeSize": self.tree_size,
            "path": list(self.path),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "InclusionProof":
        return cls(obj["leafIndex"], obj["treeSize"], tuple(obj["path"]))


@dataclass(frozen=True)
class ConsistencyProof:
    old_size: int
    new_size: int
    nodes: tuple[str, ...]

    def to_obj(self) -> dict:
        return {
            "oldSize": self.old_size,
            "newSize": self.new_size,
            "nodes": list(self.nodes),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ConsistencyProof":
        return cls(obj["oldSize"], obj["newSize"], tuple(obj["nodes"]))


def verify_inclusion(root_hex: str, leaf_hash_hex: str, proof: InclusionProof) -> bool:
    """Recompute the head from leaf hash + audit path; any perturbation of
    leaf, path element, index, or size fails."""
    if proof.leaf_index < 0 or proof.tree_size <= 0 or proof.leaf_index >= proof.tree_size:
        return False
    try:
        node = bytes.fromhex(leaf_hash_hex)
        path = [bytes.fromhex(p) for p in proof.path]
        expected = bytes.fromhex(root_hex)
    except ValueError:
        return False

    fn, sn = proof.leaf_index, proof.tree_size - 1
    for sibling in path:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            node = _hash_node(sibling, node)
            if not fn & 1:
                while True:
                    fn >>= 1
                    sn >>= 1
                    if fn & 1 or fn == 0:
                        break
        else:
            node = _hash_node(node, sibling)
        fn >>= 1
        sn >>= 1
    return sn == 0 and node == expected


def verify_consistency(old_root_hex: str, new_root_hex: str, proof: ConsistencyProof) -> bool:
    """Check that the old head is a prefix commitment of the new head."""
    m, n = proof.old_size, proof.new_size
    if m <= 0 or m > n:
        return False
    try:
        old_root = bytes.fromhex(old_root_hex)
        new_root = bytes.fromhex(new_root_hex)
        nodes = [bytes.fromhex(p) for p in proof.nodes]
    except ValueError:
        return False
    if m == n:
        return not nodes and old_root == new_root

    # when the old tree is a complete subtree its root seeds the walk
    if m & (m - 1) == 0:
        nodes = [old_root] + nodes
    if not nodes:
        return False

    fn, sn = m - 1, n - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = nodes[0]
    for node in nodes[1:]:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            fr = _hash_node(node, fr)
            sr = _hash_node(node, sr)
            if not fn & 1:
                while True:
                    fn >>= 1
                    sn >>= 1
                    if fn & 1 or fn == 0:
                        break
        else:
            sr = _hash_node(sr, node)
        fn >>= 1
        sn >>= 1
    return fr == old_root and sr == new_root and sn == 0


# --------------------------------------------------------------------------
# Log persistence: newline-delimited canonical events + checkpoints
# --------------------------------------------------------------------------

def write_log(events: list[AuditEvent], path) -> None:
    with open(path, "wb") as fh:
        for event in events:
            fh.write(crypto.canonicalize(event.to_obj()) + b"\n")


def read_log(path) -> tuple[AuditTree, list[AuditEvent]]:
    """Re-derive the tree from a persisted log, bit-exactly."""
    tree = AuditTree()
    events = []
    with open(path, "rb") as fh:
        for line in fh:
            line = line.rstrip(b"\n")
            if not line:
                continue
            event = AuditEvent.from_obj(crypto.loads(line))
            events.append(event)
            tree.append(event)
    return tree, events


def write_checkpoints(checkpoints: list[dict], path) -> None:
    with open(path, "wb") as fh:
        for checkpoint in checkpoints:
            fh.write(crypto.canonicalize(checkpoint) + b"\n")


def read_checkpoints(path) -> list[dict]:
    out = []
    with open(path, "rb") as fh:
        for line in fh:
            line = line.rstrip(b"\n")
            if line:
                out.append(crypto.loads(line))
    return out
