"""Dual-branch Legendre message-passing network for molecular properties."""

__version__ = "0.1.0"
