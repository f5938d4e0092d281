"""Restricted ray transform of symmetric tensor fields over lines through a curve."""

__version__ = "0.1.0"
