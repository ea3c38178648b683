"""Sovereign master data exchange toolkit.

Master data records travel between autonomous organizations as signed,
revocable, selectively disclosable credentials.  Exchanges are governed
by machine-readable usage policies agreed through contract negotiation
and accounted for in a content-blind Merkle audit log.  A deterministic
discrete-tick simulator wires the pieces into multi-party scenarios.
"""

__version__ = "0.1.0"
