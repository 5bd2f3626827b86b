"""Numerical laboratory for the transverse-instability normal form of gZK line solitons."""

__version__ = "0.1.0"
