"""Shear wave elasticity imaging toolkit."""

__version__ = "0.1.0"
