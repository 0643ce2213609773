"""Convex capital requirements and partial-equilibrium pricing in finite incomplete markets."""

__version__ = "0.1.0"
