"""Shared error hierarchy. Module-specific errors subclass SomonitorError."""


class SomonitorError(Exception):
    """Base class for every error raised by this package."""
