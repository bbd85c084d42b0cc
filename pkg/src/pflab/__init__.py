"""Finite-dimensional laboratory for Pauli-Fierz Hamiltonians and thermal Liouvilleans."""

__version__ = "0.1.0"
