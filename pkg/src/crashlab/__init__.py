"""Crashworthiness design-space exploration for thermoformed composite enclosures."""

__version__ = "0.1.0"
