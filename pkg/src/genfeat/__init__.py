"""Generative feature extraction for document classification."""

__version__ = "0.1.0"
