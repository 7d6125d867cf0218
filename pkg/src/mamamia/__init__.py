"""Membership inference against marginals-based private synthetic data."""

__version__ = "0.1.0"
