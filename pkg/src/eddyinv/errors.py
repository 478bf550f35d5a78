"""Structured errors for file formats and CLI reporting.

Each class carries a short machine-parsable ``category`` that the CLI
prints as ``error:<category>: <message>`` before exiting nonzero.
"""

from __future__ import annotations


class EddyInvError(Exception):
    category = "error"


class FormatError(EddyInvError):
    """Base for malformed dataset/checkpoint files."""

    category = "format"


class BadMagicError(FormatError):
    category = "bad-magic"


class UnsupportedVersionError(FormatError):
    category = "bad-version"


class TruncatedFileError(FormatError):
    category = "truncated"


class ShapeMismatchError(FormatError):
    category = "shape-mismatch"


class VariantMismatchError(EddyInvError):
    category = "variant-mismatch"


class ConfigError(EddyInvError):
    category = "config"
