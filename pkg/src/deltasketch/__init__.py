"""Sketches for bounded-deletion (alpha-property) turnstile streams."""

__version__ = "0.1.0"
