"""Numerical Kaehler geometry on model manifolds."""

__version__ = "0.1.0"
