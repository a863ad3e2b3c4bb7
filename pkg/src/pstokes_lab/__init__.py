"""Finite-element laboratory for block preconditioners of regularized power-law Stokes flow."""

__version__ = "0.1.0"
