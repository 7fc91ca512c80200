"""Explainable marketing analytics: pillars, personas, rankings, stories."""

__version__ = "0.1.0"
