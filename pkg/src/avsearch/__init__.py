"""Attention-guided active visual search on a 2.5D grid world."""

__version__ = "0.1.0"
