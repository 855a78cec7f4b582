"""Numerical laboratory for self-expanding solutions of mean curvature flow."""

__version__ = "0.1.0"
