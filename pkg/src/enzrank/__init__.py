"""Enzyme-reaction retrieval benchmark engine."""

__version__ = "0.1.0"
