"""Numerical laboratory for the Dirac-field quantum weak energy inequality."""

__version__ = "0.1.0"
