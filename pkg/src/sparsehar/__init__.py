"""Sparse-code feature learning for accelerometer activity recognition."""

__version__ = "0.1.0"
