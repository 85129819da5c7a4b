"""Subspace-swap probability bounds and threshold-SNR experiments."""

__version__ = "0.1.0"
