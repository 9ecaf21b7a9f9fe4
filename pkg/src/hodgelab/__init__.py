"""Discrete signature operators on lattice tori with rough metrics."""

__version__ = "0.1.0"
