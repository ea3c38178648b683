"""Shared exception base for the package."""


class Error(Exception):
    """Base class for all errors raised by sovereign_mdm modules."""
