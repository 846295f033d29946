"""Numerical verification of pointwise bi-slant submanifolds of flat product spaces."""

__version__ = "0.1.0"
