"""Dynamical quantum phase transitions in chiral non-Hermitian two-band lattices."""

__version__ = "0.1.0"
