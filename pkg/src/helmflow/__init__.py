"""Advection-diffusion on moving smooth domains via modified-Helmholtz solves."""

__version__ = "0.1.0"
