"""Ultrastrong-coupling criticality, critical sensing and Gaussian metrology toolkit."""

__version__ = "0.1.0"
