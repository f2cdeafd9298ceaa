"""Symmetry analysis of quasi-linear second-order PDEs with arbitrary
source functions: determining equations, kernel groups, and complete
classification over a finite ansatz."""

__version__ = "0.1.0"
