"""Distributed DER allocation for frequency-regulation signal tracking."""

__version__ = "0.1.0"
