"""Synchronized polygonal multi-bubble construction and its numerical audits."""
__version__ = "0.1.0"
