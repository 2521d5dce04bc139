"""Wideband capacity maximization with beyond-diagonal RIS reflection matrices."""

__version__ = "0.1.0"
