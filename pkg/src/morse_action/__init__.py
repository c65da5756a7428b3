"""Morse complex of the Lagrangian action functional through the Model Context Protocol."""

__version__ = "0.1.0"
