"""Multistable Lévy motion simulation and image-dimension checks."""

__version__ = "0.1.0"
