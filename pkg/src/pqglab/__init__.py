"""Precipitating quasi-geostrophic model: thermodynamics, microphysics, inversion, dynamics."""
__version__ = "0.1.0"
