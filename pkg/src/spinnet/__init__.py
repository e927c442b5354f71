"""Polarization decay in doubly disordered electron and nuclear spin lattices."""

__version__ = "0.1.0"
