"""Independent oracles used by the test suite.

Everything in this file is written against the external definitions of
the formats and algorithms (canonical grammar, SHA-256 from FIPS 180-4,
RFC 6962 tree heads and proofs, the policy decision procedure, bitstring
semantics, precedence ordering), deliberately sharing no code with the
package under test.  Oracles recompute expected values by the most naive
route available.
"""

from __future__ import annotations

import struct


# --------------------------------------------------------------------------
# Canonical serialization oracle: independent recursive serializer
# --------------------------------------------------------------------------

def oracle_canonical(value) -> bytes:
    if value is None:
        return b"null"
    if value is True:
        return b"true"
    if value is False:
        return b"false"
    if isinstance(value, int):
        return b"%d" % value
    if isinstance(value, str):
        return _oracle_string(value)
    if isinstance(value, (list, tuple)):
        return b"[" + b",".join(oracle_canonical(v) for v in value) + b"]"
    if isinstance(value, dict):
        parts = []
        for key in sorted(value.keys()):
            parts.append(_oracle_string(key) + b":" + oracle_canonical(value[key]))
        return b"{" + b",".join(parts) + b"}"
    raise TypeError(f"oracle cannot serialize {type(value)}")


def _oracle_string(s: str) -> bytes:
    buf = ['"']
    for ch in s:
        code = ord(ch)
        if ch == '"':
            buf.append('\\"')
        elif ch == "\\":
            buf.append("\\\\")
        elif code == 0x0A:
            buf.append("\\n")
        elif code == 0x0D:
            buf.append("\\r")
        elif code == 0x09:
            buf.append("\\t")
        elif code < 0x20:
            buf.append("\\u{:04x}".format(code))
        else:
            buf.append(ch)
    buf.append('"')
    return "".join(buf).encode("utf-8")


# --------------------------------------------------------------------------
# Pure-Python SHA-256 (FIPS 180-4), independent of hashlib
# --------------------------------------------------------------------------

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]

_H0 = [
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
]


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def oracle_sha256(data: bytes) -> str:
    length = len(data) * 8
    data = data + b"\x80"
    while (len(data) % 64) != 56:
        data += b"\x00"
    data += struct.pack(">Q", length)

    h = list(_H0)
    for block_start in range(0, len(data), 64):
        block = data[block_start:block_start + 64]
        w = list(struct.unpack(">16I", block))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)

        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            t1 = (hh + s1 + ch + _K[i] + w[i]) & 0xFFFFFFFF
            s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            t2 = (s0 + maj) & 0xFFFFFFFF
            hh, g, f, e, d, c, b, a = (
                g, f, e, (d + t1) & 0xFFFFFFFF, c, b, a, (t1 + t2) & 0xFFFFFFFF,
            )
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e, f, g, hh))]

    return "".join("%08x" % x for x in h)


# --------------------------------------------------------------------------
# RFC 6962 Merkle tree oracle: naive recursive recomputation
# --------------------------------------------------------------------------

def _split_point(n: int) -> int:
    """Largest power of two strictly less than n (n >= 2)."""
    k = 1
    while 2 * k < n:
        k *= 2
    return k


class MerkleOracle:
    """Brute-force tree head, audit path, and consistency proof generator.

    Works directly on the list of leaf hashes (32-byte values); every call
    recomputes from scratch.
    """

    def __init__(self, sha256_fn):
        # injected hash so the oracle can run off oracle_sha256 or hashlib
        self._hash = sha256_fn

    def node(self, left: bytes, right: bytes) -> bytes:
        return bytes.fromhex(self._hash(b"\x01" + left + right))

    def root(self, leaves: list[bytes]) -> bytes:
        if not leaves:
            return bytes.fromhex(self._hash(b""))
        if len(leaves) == 1:
            return leaves[0]
        k = _split_point(len(leaves))
        return self.node(self.root(leaves[:k]), self.root(leaves[k:]))

    def inclusion_path(self, index: int, leaves: list[bytes]) -> list[bytes]:
        n = len(leaves)
        if n == 1:
            return []
        k = _split_point(n)
        if index < k:
            return self.inclusion_path(index, leaves[:k]) + [self.root(leaves[k:])]
        return self.inclusion_path(index - k, leaves[k:]) + [self.root(leaves[:k])]

    def consistency_nodes(self, m: int, leaves: list[bytes]) -> list[bytes]:
        if m == len(leaves):
            return []
        return self._subproof(m, leaves, True)

    def _subproof(self, m: int, leaves: list[bytes], whole: bool) -> list[bytes]:
        n = len(leaves)
        if m == n:
            return [] if whole else [self.root(leaves)]
        k = _split_point(n)
        if m <= k:
            return self._subproof(m, leaves[:k], whole) + [self.root(leaves[k:])]
        return self._subproof(m - k, leaves[k:], False) + [self.root(leaves[:k])]


# --------------------------------------------------------------------------
# Bitstring status oracle: naive per-bit expansion of the hex string
# --------------------------------------------------------------------------

def oracle_status_bits(bits_hex: str) -> list[int]:
    """Expand a hex-encoded LSB-first bitstring into a 0/1 list."""
    raw = bytes.fromhex(bits_hex)
    out = []
    for byte in raw:
        for pos in range(8):
            out.append((byte >> pos) & 1)
    return out


# --------------------------------------------------------------------------
# Usage-policy oracle: independent decision procedure over rule dicts
# --------------------------------------------------------------------------

def _oracle_constraint_ok(constraint: dict, ctx: dict) -> bool:
    dim = constraint["dimension"]
    if dim == "elapsedTick":
        left = ctx["tick"]
    elif dim == "purpose":
        left = ctx["purpose"]
    elif dim == "useCount":
        left = ctx["priorUseCount"] + 1
    elif dim == "region":
        left = ctx["region"]
    else:
        raise ValueError(dim)
    op = constraint["operator"]
    right = constraint["value"]
    if op == "eq":
        return left == right
    if op == "lteq":
        return left <= right
    if op == "gteq":
        return left >= right
    raise ValueError(op)


def _oracle_rule_matches(rule: dict, ctx: dict) -> bool:
    if rule["action"] != ctx["action"]:
        return False
    return all(_oracle_constraint_ok(c, ctx) for c in rule["constraints"])


def oracle_policy_eval(policy: dict, ctx: dict) -> str:
    """Deny-overrides, default-deny evaluation over plain dicts."""
    matched_prohibition = False
    for rule in policy["prohibitions"]:
        if _oracle_rule_matches(rule, ctx):
            matched_prohibition = True
    if matched_prohibition:
        return "Deny"
    matched_permission = False
    for rule in policy["permissions"]:
        if _oracle_rule_matches(rule, ctx):
            matched_permission = True
    return "Permit" if matched_permission else "Deny"


# --------------------------------------------------------------------------
# Golden-record precedence oracle: sort by the stated key, take the head
# --------------------------------------------------------------------------

def oracle_precedence_head(sources: list[dict], tiers: dict, default_tier: int) -> dict:
    """Order candidate attribute sources and return the winner.

    Key: (tier rank ascending, issuedAt descending, issuer ascending,
    version descending, credentialId ascending).
    """
    def key(src: dict):
        rank = tiers.get(src["issuer"], default_tier)
        return (rank, -src["issuedAt"], src["issuer"],
                -src["version"], src["credentialId"])

    return sorted(sources, key=key)[0]
