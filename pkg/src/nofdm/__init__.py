"""Simulation toolkit for FTN non-orthogonal multicarrier coherent optical links."""

__version__ = "0.1.0"
