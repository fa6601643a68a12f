"""Intersection-union and all-in-the-alternative union-intersection tests
for multiple correlated endpoints, with a Monte Carlo power engine."""

__version__ = "0.1.0"
