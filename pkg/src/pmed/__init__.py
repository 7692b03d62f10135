"""Splitting-scheme simulation of the porous medium equation with drift."""

__version__ = "0.1.0"
