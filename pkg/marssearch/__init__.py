"""Simulate and analyse interactive search over Earth-Mars latency."""

__version__ = "0.1.0"
