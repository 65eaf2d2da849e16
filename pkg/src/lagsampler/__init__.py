"""Sampling-based Lagrangian relaxation for constrained binary optimization."""

__version__ = "0.1.0"
