"""Pseudo-spectral laboratory for 2D Navier-Stokes vorticity driven by an Ornstein-Uhlenbeck transport flow."""

__version__ = "0.1.0"
