"""Quasi-periodic point sets, random displacement fields and spectral recovery."""

__version__ = "0.1.0"
