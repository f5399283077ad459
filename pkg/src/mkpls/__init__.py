"""Manifold kernel partial least squares for visual speech sequences."""

__version__ = "0.1.0"
