"""Context-aware answer sentence ranking."""

__version__ = "0.1.0"
