"""Evolutionary system identification with typed grammars and Voronoi velocity models."""

__version__ = "0.1.0"
