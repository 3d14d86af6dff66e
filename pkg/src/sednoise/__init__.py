"""Noisy-label tooling for sound event detection annotations."""

__version__ = "0.1.0"
