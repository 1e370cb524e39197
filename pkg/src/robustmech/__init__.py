"""Robust auction design on discrete type distributions."""

__version__ = "0.1.0"
