"""Detect, attribute and roll back anomalous smart-home device interactions from packet traces."""
__version__ = "0.1.0"
