"""Virial identities, multiplier identities and spectral certificates on lattices."""

__version__ = "0.1.0"
