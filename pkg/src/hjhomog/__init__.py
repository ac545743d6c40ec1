"""Effective Hamiltonians and homogenization of monotone Hamilton-Jacobi systems."""

__version__ = "0.1.0"
