"""Certified randomness from Leggett-Garg inequality violations on a qubit."""

__all__ = ["__version__"]
__version__ = "0.1.0"
