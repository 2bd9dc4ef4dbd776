"""Discrete Helmholtz analysis for second-order finite-difference equations."""

__version__ = "0.1.0"
