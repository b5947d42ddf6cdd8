"""Demonstration synthesis for bimanual mobile manipulation."""

__version__ = "0.1.0"
