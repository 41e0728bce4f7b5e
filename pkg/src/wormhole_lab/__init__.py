"""Numerical laboratory for corotational wave maps on the wormhole R x S^3."""

__version__ = "0.1.0"
