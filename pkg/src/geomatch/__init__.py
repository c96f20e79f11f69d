"""Geodesic matching of discrete curves and surfaces."""

__version__ = "0.1.0"
