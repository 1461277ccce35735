"""Event-state quantum measurement simulator."""

__version__ = "0.1.0"
