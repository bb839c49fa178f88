"""Numerical companion for infraparticle scattering states in non-relativistic QED."""

__version__ = "0.1.0"
