"""Numerics for one-dimensional Schroedinger operators with Sturmian potentials."""

__version__ = "0.1.0"
